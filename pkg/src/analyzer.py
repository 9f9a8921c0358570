"""Analysis pipelines that turn a kernel spec into a QCReport."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import config
from .decompose import doeblin_split
from .drift import (
    SynthesisResult,
    renewal_identity,
    renewal_profile,
    synthesize_certificates,
    verify_drift,
    verify_minorization,
)
from .errors import (
    DoeblinViolated,
    NotDominated,
    NotUniformlyIntegrable,
    QCertError,
    SizeLimit,
)
from .interval import Interval
from .kernel import power, spectral_radius_bounds
from .models import (
    AtomicMeasure,
    CheckResult,
    DensityKernel,
    DriftCertificate,
    EssBound,
    Kernel,
    MinorizationCertificate,
    QCReport,
    StateSpace,
    TraceStep,
    WeightFn,
)
from .specfile import KernelSpec
from .spectrum import (
    Candidate,
    DoeblinStrategy,
    ResidualStrategy,
    eigen_oracle,
    multiplier_bound,
    re_upper_doeblin,
    re_upper_residual,
    re_upper_weighted,
    residual_kernel,
)

logger = logging.getLogger(__name__)

# Leading eigenvalue moduli kept in the oracle summary
ORACLE_SUMMARY_SIZE = 8
# Decay ratio of the default reference measure on windowed spaces
DEFAULT_REFERENCE_RATIO = 0.5
# Minorization constant asked of synthesized certificates
SYNTHESIS_B = 0.5
# Path length and tolerance of the renewal identity check on finite spaces
RENEWAL_CHECK_DEPTH = 8
RENEWAL_RTOL = 1e-9


@dataclass
class AnalysisOptions:
    """Numerical settings for one analysis run."""

    weight: Optional[WeightFn] = None
    window: Optional[int] = None
    n_power: int = 32
    density_cutoff: float = 1e6
    ui_tolerance: float = 1e-9
    oracle_max_states: int = 1000
    bisection_steps: int = 60
    neumann_tol: float = 1e-13
    neumann_max_iter: int = 50_000
    neumann_damping: float = 1.0
    enumeration_limit: int = 20_000_000
    n_cap: int = 64
    rho_margin: float = 0.01
    synthesize: bool = False
    doeblin_powers: Sequence[int] = field(default_factory=lambda: (1, 2))

    @classmethod
    def from_config(cls, cfg: Optional[config.Config] = None, **overrides) -> "AnalysisOptions":
        cfg = config.load_config() if cfg is None else cfg
        options = cls(
            n_power=cfg.n_power,
            density_cutoff=cfg.density_cutoff,
            ui_tolerance=cfg.ui_tolerance,
            oracle_max_states=cfg.oracle_max_states,
            bisection_steps=cfg.bisection_steps,
            neumann_tol=cfg.neumann_tol,
            neumann_max_iter=cfg.neumann_max_iter,
            neumann_damping=cfg.neumann_damping,
            enumeration_limit=cfg.enumeration_limit,
            n_cap=cfg.n_cap,
            rho_margin=cfg.rho_margin,
        )
        for key, value in overrides.items():
            setattr(options, key, value)
        return options


def _restrict_weight(w: WeightFn, space: StateSpace) -> WeightFn:
    return WeightFn(space, w.values[: space.n_states], w.tail_ratio)


def _restrict_measure(mu: AtomicMeasure, space: StateSpace, what: str) -> AtomicMeasure:
    keep = mu.indices < space.n_states
    if not np.all(keep):
        raise ValueError(f"{what} charges states beyond the window {space}")
    return AtomicMeasure(space, mu.indices, mu.weights, mu.tail_bound)


def restrict_spec(spec: KernelSpec, x_max: int) -> KernelSpec:
    """Shrink a windowed spec to {0..x_max}, keeping certificates that fit."""
    kernel = spec.kernel.restrict(x_max)
    space = kernel.space
    weight = None if spec.weight is None else _restrict_weight(spec.weight, space)
    drift = None
    if spec.drift is not None:
        if max(spec.drift.C) > x_max:
            raise ValueError(f"drift set C reaches beyond the window {space}")
        drift = DriftCertificate(
            spec.drift.C, _restrict_weight(spec.drift.w, space), spec.drift.r1, spec.drift.eta
        )
    minor = None
    if spec.minorization is not None:
        m = spec.minorization
        if max(m.C) > x_max:
            raise ValueError(f"small set C reaches beyond the window {space}")
        keep = space.n_states
        minor = MinorizationCertificate(
            m.C, m.b, _restrict_measure(m.nu, space, "minorization nu"), m.alpha[:keep, :keep]
        )
    doeblin = None
    if spec.doeblin is not None:
        logger.debug("dropping the Doeblin certificate when restricting to x_max=%d", x_max)
    return KernelSpec(kernel, weight, doeblin, drift, minor, spec.multiplier)


def prepare(spec: KernelSpec, options: AnalysisOptions) -> tuple[KernelSpec, Optional[WeightFn]]:
    if options.window is not None and spec.kernel.space.is_windowed:
        spec = restrict_spec(spec, options.window)
    w = options.weight if options.weight is not None else spec.weight
    if w is not None and w.space != spec.kernel.space:
        w = _restrict_weight(w, spec.kernel.space)
    return spec, w


def minorization_density(minor: MinorizationCertificate) -> DensityKernel:
    """b T_{ν,α} as a density kernel supported on the rows of C."""
    rows = sp.diags(minor.in_c().astype(np.float64) * minor.b)
    return DensityKernel(minor.nu, sp.csr_matrix(rows @ minor.alpha))


def default_reference(space: StateSpace) -> AtomicMeasure:
    """Uniform ν on finite spaces, a geometric ν on windows.

    A window needs ν to decay below the light-state level before the
    frontier, otherwise the Doeblin/tail bound sees no small sets.
    """
    if space.is_windowed:
        return AtomicMeasure.geometric(space, DEFAULT_REFERENCE_RATIO)
    return AtomicMeasure.uniform(space)


def _default_candidates(Q: Kernel, powers: Sequence[int]) -> list[Candidate]:
    nu = default_reference(Q.space)
    return [(ell, nu) for ell in powers]


def _oracle_summary(
    Q: Kernel, w: Optional[WeightFn], re_hi: float, max_states: int
) -> Optional[dict]:
    if Q.n_states > max_states:
        return None
    spectrum = eigen_oracle(Q, w, max_states)
    moduli = [abs(v) for v in spectrum]
    return {
        "n_states": Q.n_states,
        "truncated": Q.space.is_windowed,
        "leading": [[v.real, v.imag] for v in spectrum[:ORACLE_SUMMARY_SIZE]],
        "leading_moduli": moduli[:ORACLE_SUMMARY_SIZE],
        "above_re_upper": sum(1 for m in moduli if m > re_hi + 1e-9),
    }


def _record(report: QCReport, bound: EssBound, label: str) -> None:
    report.trace.append(TraceStep(label, bound.value, bound.witnesses))


def analyze_kernel(spec: KernelSpec, options: Optional[AnalysisOptions] = None) -> QCReport:
    """Essential-radius analysis of a kernel spec.

    Runs the Doeblin/tail strategy (certificate candidate when the kernel spec
    carries one, plus `default_reference` ν) and the residual-norm strategy built
    from the minorization block, in the weighted space when a weight is
    given. The smallest certified upper end wins.
    """
    options = AnalysisOptions() if options is None else options
    spec, w = prepare(spec, options)
    Q = spec.kernel

    radius = spectral_radius_bounds(Q, w, options.n_power)
    report = QCReport(spectral_radius=radius, re_upper=Interval.unbounded())
    report.trace.append(
        TraceStep("spectral_radius_bounds", radius, {"n_power": options.n_power, "weighted": w is not None})
    )

    bounds: list[EssBound] = []
    residual: Optional[tuple[int, Kernel]] = None

    candidates = _default_candidates(Q, options.doeblin_powers)
    if spec.doeblin is not None:
        cert = spec.doeblin
        try:
            split = doeblin_split(Q, cert)
        except DoeblinViolated as e:
            witness = {"row": e.row, "set": list(e.witness), "mass": e.mass}
            report.checks.append(
                CheckResult("doeblin", False, witness, str(e), DoeblinViolated)
            )
            report.verification["doeblin"] = False
        else:
            report.checks.append(
                CheckResult(
                    "doeblin",
                    True,
                    {"s_norm": split.s_norm, "threshold": split.threshold, "condition": split.condition},
                    f"split residual norm {split.s_norm:.6g} <= rho^ell = {cert.bound:.6g}",
                )
            )
            report.verification["doeblin"] = True
            residual = (cert.ell, split.S)
        candidates.insert(0, (cert.ell, cert.nu))

    if w is None:
        bound = re_upper_doeblin(Q, candidates, options.density_cutoff)
    else:
        bound = re_upper_weighted(Q, w, DoeblinStrategy(candidates, options.density_cutoff))
    bounds.append(bound)
    _record(report, bound, "doeblin_tail")

    if spec.minorization is not None:
        T = minorization_density(spec.minorization)
        strategy = ResidualStrategy(
            1, T, options.n_power, options.density_cutoff, options.ui_tolerance
        )
        try:
            if w is None:
                bound = re_upper_residual(
                    Q, 1, T, options.n_power, options.density_cutoff, options.ui_tolerance
                )
            else:
                bound = re_upper_weighted(Q, w, strategy)
        except (NotDominated, NotUniformlyIntegrable) as e:
            logger.debug("residual strategy rejected: %s", e)
            report.checks.append(CheckResult("residual_split", False, {}, str(e), type(e)))
            report.verification["residual_split"] = False
        else:
            bounds.append(bound)
            _record(report, bound, "residual_norm")
            report.verification["residual_split"] = True
            if residual is None:
                residual = (1, residual_kernel(power(Q, 1), T))

    best = min(bounds, key=lambda b: b.value.hi)
    report.re_upper = best.value
    report.quasi_compact = best.quasi_compact
    report.extra["method"] = best.method.value

    if spec.multiplier is not None:
        ell, S = residual if residual is not None else (1, Q)
        mb = multiplier_bound(Q, spec.multiplier.multiplier, ell, S, options.n_power)
        report.extra["multiplier"] = mb._asdict()

    try:
        report.oracle = _oracle_summary(Q, w, report.re_upper.hi, options.oracle_max_states)
    except QCertError as e:
        logger.debug("oracle skipped: %s", e)
    return report


def synthesize_spec(
    spec: KernelSpec, w: Optional[WeightFn], options: AnalysisOptions
) -> tuple[KernelSpec, SynthesisResult]:
    """Certificates for P^n on the full level set of a finite Markov chain.

    The weight defaults to w ≡ 1, so C_t = E and the returned spec holds
    P^n with its drift and minorization blocks.

    Raises:
        NotFound: If no power up to options.n_cap admits certificates.
    """
    P = spec.kernel
    weight = w if w is not None else WeightFn.constant(P.space)
    level = float(weight.values.max())
    result = synthesize_certificates(
        P, weight, level, SYNTHESIS_B, options.n_cap, options.rho_margin, options.oracle_max_states
    )
    synthesized = KernelSpec(
        result.kernel, weight, drift=result.drift, minorization=result.minorization
    )
    return synthesized, result


def _renewal_check(
    P: Kernel, minor: MinorizationCertificate, options: AnalysisOptions
) -> Optional[CheckResult]:
    x = min(minor.C)
    try:
        lhs, rhs = renewal_identity(P, minor, x, RENEWAL_CHECK_DEPTH, options.enumeration_limit)
    except SizeLimit as e:
        logger.debug("renewal identity skipped: %s", e)
        return None
    passed = abs(lhs - rhs) <= RENEWAL_RTOL * max(1.0, abs(lhs))
    return CheckResult(
        "renewal_identity",
        passed,
        {"x": x, "n": RENEWAL_CHECK_DEPTH, "lhs": lhs, "rhs": rhs},
        f"(S^n 1)(x) = {lhs:.12g} vs E_x[(1-b)^N_n] = {rhs:.12g}",
    )


def certify_kernel(spec: KernelSpec, options: Optional[AnalysisOptions] = None) -> QCReport:
    """Drift + minorization pipeline: verify both certificates, then bracket r_b.

    A failed certificate yields a report with verification False and the
    witness in `checks`; the bound stays unbounded. With
    options.synthesize a finite Markov spec without certificates gets
    them from `synthesize_spec`, and the bound on P^n is taken to the
    power 1/n. Finite spaces also check the renewal identity at one
    state of C.

    Raises:
        ValueError: If the kernel spec lacks a drift or minorization block.
        NotFound: If synthesis finds no certificates.
        Inconclusive: If r_b cannot be separated from 1.
    """
    options = AnalysisOptions() if options is None else options
    spec, w = prepare(spec, options)
    original = spec.kernel
    synthesis: Optional[SynthesisResult] = None
    if (spec.drift is None or spec.minorization is None) and options.synthesize:
        spec, synthesis = synthesize_spec(spec, w, options)
    if spec.drift is None or spec.minorization is None:
        raise ValueError(
            "certify needs drift and minorization certificates\n"
            "Add a 'certificates' block with 'drift' and 'minorization', or pass --synthesize"
        )
    P = spec.kernel
    drift, minor = spec.drift, spec.minorization
    power_n = 1 if synthesis is None else synthesis.n

    radius = spectral_radius_bounds(original, drift.w, options.n_power)
    report = QCReport(spectral_radius=radius, re_upper=Interval.unbounded())
    report.trace.append(
        TraceStep("spectral_radius_bounds", radius, {"n_power": options.n_power, "weighted": True})
    )
    if synthesis is not None:
        report.trace.append(
            TraceStep(
                "synthesis",
                Interval.point(synthesis.rho),
                {"n": synthesis.n, "period": synthesis.period, "rho_margin": options.rho_margin},
            )
        )

    drift_check = verify_drift(P, drift)
    minor_check = verify_minorization(
        P, minor, drift.w, options.density_cutoff, options.ui_tolerance
    )
    report.checks.extend([drift_check, minor_check])
    report.verification["drift"] = drift_check.passed
    report.verification["minorization"] = minor_check.passed
    if not report.all_verified:
        return report
    if not P.space.is_windowed:
        renewal = _renewal_check(P, minor, options)
        if renewal is not None:
            report.checks.append(renewal)
            report.verification["renewal_identity"] = renewal.passed

    profile = renewal_profile(
        P,
        drift,
        minor,
        steps=options.bisection_steps,
        tol=options.neumann_tol,
        max_iter=options.neumann_max_iter,
        damping=options.neumann_damping,
    )
    bound = Interval.outward(1.0 / profile.r_b.hi, 1.0 / profile.r_b.lo)
    if power_n > 1:
        bound = bound.root(power_n)
    report.r_b = profile.r_b
    report.re_upper = bound
    report.quasi_compact = bound.hi < radius.lo
    report.trace.append(
        TraceStep(
            "drift_renewal",
            bound,
            {
                "C": drift.C,
                "r1": drift.r1,
                "eta": drift.eta,
                "b": minor.b,
                "r_b": profile.r_b,
                "renewal": profile.to_dict(),
            },
        )
    )
    if spec.multiplier is not None:
        chi = spec.multiplier.multiplier
        report.extra["multiplier"] = {
            "norm": chi.norm_bound,
            "weighted_bound": chi.norm_bound / profile.r_b.lo,
        }
    try:
        report.oracle = _oracle_summary(original, drift.w, bound.hi, options.oracle_max_states)
    except QCertError as e:
        logger.debug("oracle skipped: %s", e)
    return report
