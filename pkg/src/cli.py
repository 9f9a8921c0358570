"""Command-line interface for qcert."""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional

from . import __version__, analyzer, builtin_kernels, config, specfile
from .ergodic import ergodic_decay_check
from .errors import (
    EnvelopeViolated,
    Inconclusive,
    IncompatibleTail,
    MissingTailBound,
    NotAKernel,
    NotMarkov,
    QCertError,
    SizeLimit,
    SpaceMismatch,
    SpecFileError,
)
from .models import QCReport, StateSpace, WeightFn, to_jsonable
from .spectrum import eigen_oracle

logger = logging.getLogger(__name__)

# Exit codes
EXIT_VERIFIED = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_INCONCLUSIVE = 3

# Errors caused by the input rather than by a certificate
INPUT_ERRORS = (
    SpecFileError,
    SpaceMismatch,
    MissingTailBound,
    IncompatibleTail,
    NotMarkov,
    SizeLimit,
    ValueError,
    OSError,
)

COLORS = {"green": "32", "red": "31", "yellow": "33"}


def use_color() -> bool:
    """Color only on a terminal and only when NO_COLOR is unset."""
    return "NO_COLOR" not in os.environ and sys.stdout.isatty()


def paint(text: str, color: str) -> str:
    if not use_color():
        return text
    return f"\033[{COLORS[color]}m{text}\033[0m"


def handle_cli_error(
    error: Exception,
    context: str = "",
    show_traceback: bool = False,
    exit_code: int = EXIT_FAILED,
) -> int:
    """Standardized error handling for CLI commands.

    Args:
        error: Exception object to handle
        context: Additional context for the error (e.g., "loading kernel")
        show_traceback: Whether to show full traceback for debugging
        exit_code: Exit code to return

    Returns:
        exit_code for chaining
    """
    error_prefix = "Error"
    if context:
        error_prefix += f" {context}"

    print(f"{error_prefix}: {error}", file=sys.stderr)

    if show_traceback:
        import traceback

        traceback.print_exc()

    return exit_code


def exit_code_for(error: Exception) -> int:
    """Map an exception to the documented exit code."""
    if isinstance(error, Inconclusive):
        return EXIT_INCONCLUSIVE
    if isinstance(error, INPUT_ERRORS):
        return EXIT_INPUT
    return EXIT_FAILED


def parse_weight_option(value: str, space: StateSpace) -> WeightFn:
    """--weight geometric:Z | constant | FILE (JSON weight block).

    Raises:
        ValueError: If the option cannot be parsed.
    """
    if value == "constant":
        return WeightFn.constant(space)
    if value.startswith("geometric:"):
        try:
            z = float(value.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"Invalid geometric weight: {value}\nExpected geometric:Z, e.g. geometric:1.5")
        return WeightFn.geometric(space, z)
    path = Path(value)
    if not path.exists():
        raise ValueError(
            f"Invalid weight: {value}\n"
            f"Use 'constant', 'geometric:Z' or a JSON file with a weight block"
        )
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SpecFileError(e.msg, line=e.lineno) from e
    return specfile.parse_weight(space, data)


def write_report(data: Any, out: Optional[str]) -> None:
    """Write a machine-readable report when --out is given."""
    if not out:
        return
    text = json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"
    Path(out).write_text(text, encoding="utf-8")
    print(f"✓ Report written to {out}")


def _load(args: argparse.Namespace) -> specfile.KernelSpec:
    spec = specfile.load_spec(Path(args.kernel))
    for kind, attr in (("drift", "drift"), ("minorization", "minorize")):
        path = getattr(args, attr, None)
        if path:
            spec = specfile.load_certificate(spec, Path(path), kind)
    return spec


def _options(args: argparse.Namespace, spec: specfile.KernelSpec) -> analyzer.AnalysisOptions:
    space = spec.kernel.space
    window = getattr(args, "window", None)
    if window is not None and space.is_windowed:
        space = StateSpace.windowed(window)
    weight = None
    if getattr(args, "weight", None):
        full = spec.kernel.space
        weight = parse_weight_option(args.weight, full)
        if space != full:
            weight = WeightFn(space, weight.values[: space.n_states], weight.tail_ratio)
    return analyzer.AnalysisOptions.from_config(
        weight=weight, window=window, synthesize=getattr(args, "synthesize", False)
    )


def print_report(report: QCReport, title: str) -> None:
    print(f"{title}")
    print(f"  spectral radius  {report.spectral_radius}")
    print(f"  r_e upper bound  {report.re_upper}")
    if report.r_b is not None:
        print(f"  r_b              {report.r_b}")
    if report.quasi_compact is not None:
        verdict = "quasi-compact" if report.quasi_compact else "not certified quasi-compact"
        print(f"  verdict          {verdict}")
    for check in report.checks:
        mark = paint("✓", "green") if check.passed else paint("✗", "red")
        print(f"  {mark} {check.name}: {check.detail}")
        if not check.passed:
            print(f"      witness: {json.dumps(to_jsonable(check.witness), sort_keys=True)}")
    if report.oracle is not None:
        moduli = ", ".join(f"{m:.6f}" for m in report.oracle["leading_moduli"])
        print(f"  oracle |λ|       {moduli}")


def _report_exit(report: QCReport) -> int:
    return EXIT_VERIFIED if report.all_verified else EXIT_FAILED


def handle_analyze(args: argparse.Namespace) -> int:
    """Handle 'analyze' command.

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code
    """
    try:
        spec = _load(args)
        report = analyzer.analyze_kernel(spec, _options(args, spec))
    except QCertError as e:
        return handle_cli_error(e, "analyzing kernel", args.verbose, exit_code_for(e))
    except INPUT_ERRORS as e:
        return handle_cli_error(e, "loading kernel", args.verbose, EXIT_INPUT)

    print_report(report, f"Essential spectral radius of {args.kernel}")
    write_report(report.to_dict(), args.out)
    return _report_exit(report)


def handle_certify(args: argparse.Namespace) -> int:
    """Handle 'certify' command (drift + minorization pipeline).

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code
    """
    try:
        spec = _load(args)
        report = analyzer.certify_kernel(spec, _options(args, spec))
    except Inconclusive as e:
        code = handle_cli_error(e, "certifying kernel", args.verbose, EXIT_INCONCLUSIVE)
        if e.suggested_window is not None:
            print(f"⚠ Try again with --window {e.suggested_window}", file=sys.stderr)
        return code
    except QCertError as e:
        return handle_cli_error(e, "certifying kernel", args.verbose, exit_code_for(e))
    except INPUT_ERRORS as e:
        return handle_cli_error(e, "loading kernel", args.verbose, EXIT_INPUT)

    print_report(report, f"Drift certificate for {args.kernel}")
    write_report(report.to_dict(), args.out)
    return _report_exit(report)


def handle_spectrum(args: argparse.Namespace) -> int:
    """Handle 'spectrum' command: dense eigenvalue dump.

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code
    """
    try:
        spec = _load(args)
        if spec.kernel.space.is_windowed and not args.allow_truncation:
            raise ValueError(
                "spectrum works on finite spaces\n"
                "Pass --allow-truncation to dump the spectrum of the window"
            )
        options = _options(args, spec)
        spec, weight = analyzer.prepare(spec, options)
        values = eigen_oracle(spec.kernel, weight, options.oracle_max_states)
    except INPUT_ERRORS as e:
        return handle_cli_error(e, "computing spectrum", args.verbose, EXIT_INPUT)
    except QCertError as e:
        return handle_cli_error(e, "computing spectrum", args.verbose, exit_code_for(e))

    shown = values if args.top is None else values[: args.top]
    print(f"Spectrum of {args.kernel} ({len(values)} eigenvalues)")
    for v in shown:
        print(f"  {v.real:+.12f} {v.imag:+.12f}i   |λ| = {abs(v):.12f}")
    write_report(
        {"eigenvalues": [{"re": v.real, "im": v.imag, "modulus": abs(v)} for v in values]},
        args.out,
    )
    return EXIT_VERIFIED


def handle_ergodic(args: argparse.Namespace) -> int:
    """Handle 'ergodic' command.

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code
    """
    cfg = config.load_config()
    try:
        spec = _load(args)
        spec, weight = analyzer.prepare(spec, _options(args, spec))
        report = ergodic_decay_check(
            spec.kernel,
            weight,
            n_max=args.n_max,
            n_burn=cfg.n_burn,
            kappa_margin=cfg.kappa_margin,
            max_states=cfg.oracle_max_states,
        )
    except EnvelopeViolated as e:
        code = handle_cli_error(e, "checking decay", args.verbose, EXIT_FAILED)
        print(f"  witness: n={e.n} f={e.f_index} x={e.x}", file=sys.stderr)
        return code
    except QCertError as e:
        return handle_cli_error(e, "checking decay", args.verbose, exit_code_for(e))
    except INPUT_ERRORS as e:
        return handle_cli_error(e, "loading kernel", args.verbose, EXIT_INPUT)

    pi = ", ".join(f"{p:.6f}" for p in report.pi.to_dense().real)
    print(f"Geometric ergodicity of {args.kernel}")
    print(f"  stationary π     ({pi})")
    print(f"  period d         {report.d}")
    print(f"  envelope         D = {report.D:.6g}, κ = {report.kappa:.6g}")
    if report.measured_slope is not None:
        print(f"  log-slope        {report.measured_slope:.6f}")
    if not report.unique:
        print(paint("⚠ stationary law is not unique", "yellow"))
    print(f"{paint('✓', 'green')} envelope holds for n <= {args.n_max}")
    write_report(report.to_dict(), args.out)
    return EXIT_VERIFIED


def _conze_raugi(args: argparse.Namespace) -> int:
    u = (
        builtin_kernels.constant_u()
        if args.u == "constant"
        else builtin_kernels.sine_u(args.amplitude)
    )
    try:
        result = builtin_kernels.conze_raugi_residual(u, args.lam, args.terms, args.grid)
    except NotAKernel as e:
        return handle_cli_error(e, "building kernel", args.verbose, EXIT_FAILED)
    except ValueError as e:
        return handle_cli_error(e, "", args.verbose, EXIT_INPUT)

    verified = result.residual <= result.tail_bound + 1e-10
    print(f"Conze-Raugi eigenrelation, λ = {args.lam}, N = {args.terms}, grid = {args.grid}")
    print(f"  residual         {result.residual:.6g}")
    print(f"  tail bound       {result.tail_bound:.6g}")
    mark = paint("✓", "green") if verified else paint("✗", "red")
    print(f"{mark} P f_λ = λ f_λ {'holds' if verified else 'fails'} on the grid")
    write_report(result._asdict() | {"verified": verified}, args.out)
    return EXIT_VERIFIED if verified else EXIT_FAILED


def _walk(args: argparse.Namespace) -> int:
    try:
        walk = builtin_kernels.build_reflected_walk(args.p, args.window)
    except ValueError as e:
        return handle_cli_error(e, "", args.verbose, EXIT_INPUT)

    print(f"Reflected walk p = {args.p}, window 0..{args.window}")
    print(f"  z = √(q/p)       {walk.z:.6f}")
    print(f"  r1               {walk.r1:.6f}")
    print(f"  eta              {walk.drift.eta:.6f}")
    print(f"  bound 2√(pq)     {walk.bound:.6f}")
    if args.emit:
        specfile.save_spec(walk.to_spec(), Path(args.emit))
        print(f"✓ Kernel spec written to {args.emit}")
    write_report(
        {"p": args.p, "x_max": args.window, "z": walk.z, "r1": walk.r1, "eta": walk.drift.eta, "bound": walk.bound},
        args.out,
    )
    return EXIT_VERIFIED


def _chain(args: argparse.Namespace) -> int:
    try:
        if args.kind == "two-state":
            kernel = builtin_kernels.two_state(args.a, args.b)
        elif args.kind == "swap":
            kernel = builtin_kernels.swap()
        elif args.kind == "cycle":
            kernel = builtin_kernels.cycle(args.n)
        else:
            kernel = builtin_kernels.random_chain(args.n, args.seed)
    except (ValueError, QCertError) as e:
        return handle_cli_error(e, "", args.verbose, EXIT_INPUT)

    spec = specfile.KernelSpec(kernel)
    if args.emit:
        specfile.save_spec(spec, Path(args.emit))
        print(f"✓ Kernel spec written to {args.emit}")
    else:
        print(specfile.emit_spec(spec), end="")
    return EXIT_VERIFIED


def handle_example(args: argparse.Namespace) -> int:
    """Handle 'example' command: built-in kernels.

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code
    """
    if args.example == "conze-raugi":
        return _conze_raugi(args)
    if args.example == "walk":
        return _walk(args)
    if args.example == "chain":
        return _chain(args)
    print("Error: choose an example (conze-raugi, walk, chain)", file=sys.stderr)
    return EXIT_INPUT


def handle_config(args: argparse.Namespace) -> int:
    """Handle 'config' command.

    Args:
        args: Parsed command-line arguments

    Returns:
        Exit code (0 for success)
    """
    cfg = config.load_config()

    if not args.config_command or args.config_command == "show":
        print("Current configuration:")
        for key, value in cfg.to_dict().items():
            print(f"  {key}: {value}")
        print(f"  (file: {config.get_config_file()})")
        return 0

    elif args.config_command == "get":
        if not hasattr(cfg, args.key):
            print(f"Error: Unknown config key: {args.key}", file=sys.stderr)
            return EXIT_INPUT
        print(getattr(cfg, args.key))
        return 0

    elif args.config_command == "set":
        try:
            updated = config.set_value(args.key, args.value)
        except ValueError as e:
            return handle_cli_error(e, "", exit_code=EXIT_INPUT)
        print(f"✓ Set {args.key} = {getattr(updated, args.key)}")
        return 0

    elif args.config_command == "reset":
        config.reset_config()
        print("✓ Configuration reset to defaults")
        return 0

    return EXIT_INPUT


def _add_kernel_args(parser: argparse.ArgumentParser, weight: bool = True) -> None:
    parser.add_argument("--kernel", required=True, help="Kernel spec file (JSON)")
    if weight:
        parser.add_argument(
            "--weight",
            help="Weight: 'constant', 'geometric:Z' or a JSON file with a weight block",
        )
    parser.add_argument("--window", type=int, help="Restrict a windowed kernel to 0..N")
    parser.add_argument("--out", help="Write the machine-readable report to FILE")


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser.

    Returns:
        Configured ArgumentParser
    """
    parser = argparse.ArgumentParser(
        prog="qcert",
        description="Certify quasi-compactness and geometric ergodicity of Markov kernels",
        epilog="Examples: qcert example walk --p 0.3 --emit walk.json  or  qcert certify --kernel walk.json",
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
        help="Show version information and exit",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging and tracebacks")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    # Analyze command
    analyze_parser = subparsers.add_parser(
        "analyze", help="Bound the essential spectral radius of a kernel"
    )
    _add_kernel_args(analyze_parser)

    # Certify command
    certify_parser = subparsers.add_parser(
        "certify", help="Verify drift and minorization certificates and bound r_e^w"
    )
    _add_kernel_args(certify_parser, weight=False)
    certify_parser.add_argument("--drift", help="JSON file with a drift certificate block")
    certify_parser.add_argument(
        "--minorize", help="JSON file with a minorization certificate block"
    )
    certify_parser.add_argument(
        "--synthesize",
        action="store_true",
        help="Search certificates for P^n when a finite Markov spec has none",
    )

    # Spectrum command
    spectrum_parser = subparsers.add_parser("spectrum", help="Dense eigenvalue dump")
    _add_kernel_args(spectrum_parser)
    spectrum_parser.add_argument("--top", type=int, help="Show only the K leading eigenvalues")
    spectrum_parser.add_argument(
        "--allow-truncation",
        action="store_true",
        help="Accept windowed kernels (spectrum of the truncation)",
    )

    # Ergodic command
    ergodic_parser = subparsers.add_parser(
        "ergodic", help="Stationary law, period and geometric decay envelope"
    )
    _add_kernel_args(ergodic_parser)
    ergodic_parser.add_argument("--n-max", type=int, default=200, help="Horizon (default: 200)")

    # Example command
    example_parser = subparsers.add_parser("example", help="Built-in example kernels")
    example_subparsers = example_parser.add_subparsers(dest="example", help="Examples")

    cr_parser = example_subparsers.add_parser(
        "conze-raugi", help="Check the dyadic eigenfunction relation"
    )
    cr_parser.add_argument("--lam", type=float, default=0.4, help="Eigenvalue, |λ| < 1 (default: 0.4)")
    cr_parser.add_argument("--terms", type=int, default=48, help="Series terms N (default: 48)")
    cr_parser.add_argument("--grid", type=int, default=1024, help="Grid points (default: 1024)")
    cr_parser.add_argument(
        "--u", choices=["constant", "sine"], default="constant", help="Weight function u"
    )
    cr_parser.add_argument(
        "--amplitude", type=float, default=0.1, help="Amplitude of the sine weight (default: 0.1)"
    )
    cr_parser.add_argument("--out", help="Write the machine-readable report to FILE")

    walk_parser = example_subparsers.add_parser("walk", help="Reflected random walk")
    walk_parser.add_argument("--p", type=float, default=0.3, help="Up probability (default: 0.3)")
    walk_parser.add_argument("--window", type=int, default=300, help="Window x_max (default: 300)")
    walk_parser.add_argument("--emit", help="Write the walk as a kernel spec file")
    walk_parser.add_argument("--out", help="Write the machine-readable report to FILE")

    chain_parser = example_subparsers.add_parser("chain", help="Small finite chains")
    chain_parser.add_argument(
        "--kind", choices=["two-state", "swap", "cycle", "random"], default="two-state"
    )
    chain_parser.add_argument("--a", type=float, default=0.1, help="Two-state P(0,1)")
    chain_parser.add_argument("--b", type=float, default=0.2, help="Two-state P(1,0)")
    chain_parser.add_argument("--n", type=int, default=3, help="States (cycle, random)")
    chain_parser.add_argument("--seed", type=int, default=0, help="Seed for random chains")
    chain_parser.add_argument("--emit", help="Write the chain as a kernel spec file")

    # Config command
    config_parser = subparsers.add_parser("config", help="Manage numerical defaults")
    config_subparsers = config_parser.add_subparsers(
        dest="config_command", help="Config commands"
    )
    config_subparsers.add_parser("show", help="Show all configuration values")
    config_get_parser = config_subparsers.add_parser("get", help="Get a configuration value")
    config_get_parser.add_argument("key", help="Configuration key (e.g., n_power)")
    config_set_parser = config_subparsers.add_parser("set", help="Set a configuration value")
    config_set_parser.add_argument("key", help="Configuration key (e.g., n_power)")
    config_set_parser.add_argument("value", help="Configuration value")
    config_subparsers.add_parser("reset", help="Reset configuration to defaults")

    return parser


HANDLERS = {
    "analyze": handle_analyze,
    "certify": handle_certify,
    "spectrum": handle_spectrum,
    "ergodic": handle_ergodic,
    "example": handle_example,
    "config": handle_config,
}


def run(argv: Optional[list[str]] = None) -> int:
    """Parse argv, dispatch to a handler and return its exit code."""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VERIFIED if e.code == 0 else EXIT_INPUT

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(name)s: %(message)s")

    if not args.command:
        parser.print_help()
        return EXIT_VERIFIED

    return HANDLERS[args.command](args)


def main() -> None:
    """Main entry point for CLI."""
    sys.exit(run())


if __name__ == "__main__":
    main()
