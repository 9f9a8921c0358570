"""Tests for the analysis pipelines."""

import math

import numpy as np
import pytest

from src import analyzer, config
from src.analyzer import AnalysisOptions
from src.builtin_kernels import build_reflected_walk, doeblin_chain, random_chain, swap, two_state
from src.errors import NotFound
from src.models import AtomicMeasure, DoeblinCertificate, DriftCertificate
from src.specfile import KernelSpec, MultiplierSpec


@pytest.fixture(scope="module")
def walk():
    return build_reflected_walk(0.3, 300)


@pytest.fixture
def options():
    return AnalysisOptions(n_power=8)


def test_options_from_config():
    cfg = config.Config(
        n_power=12,
        density_cutoff=1e4,
        neumann_tol=1e-10,
        neumann_max_iter=500,
        neumann_damping=0.5,
        enumeration_limit=1000,
        n_cap=8,
        rho_margin=0.05,
    )
    opts = AnalysisOptions.from_config(cfg, window=40, synthesize=True)
    assert opts.n_power == 12
    assert opts.density_cutoff == 1e4
    assert opts.neumann_tol == 1e-10
    assert opts.neumann_max_iter == 500
    assert opts.neumann_damping == 0.5
    assert opts.enumeration_limit == 1000
    assert opts.n_cap == 8
    assert opts.rho_margin == 0.05
    assert opts.window == 40
    assert opts.synthesize is True
    assert opts.weight is None


def test_analyze_finite_chain(options):
    spec = KernelSpec(random_chain(5, seed=2))
    report = analyzer.analyze_kernel(spec, options)

    assert report.spectral_radius.contains(1.0)
    assert report.re_upper.hi < 1e-300
    assert report.quasi_compact is True
    assert report.trace[0].method == "spectral_radius_bounds"
    assert report.trace[1].method == "doeblin_tail"
    assert "method" in report.extra
    assert report.oracle["n_states"] == 5
    assert report.oracle["truncated"] is False
    assert report.oracle["leading_moduli"][0] == pytest.approx(1.0)


def test_analyze_with_doeblin_certificate(options):
    P = doeblin_chain(50, seed=0)
    nu = AtomicMeasure.uniform(P.space)
    report = analyzer.analyze_kernel(KernelSpec(P, doeblin=DoeblinCertificate(1, nu, 0.1, 0.4)), options)
    assert report.verification["doeblin"] is True
    assert report.checks[0].passed
    assert report.checks[0].witness["s_norm"] <= 0.4 + 1e-12

    report = analyzer.analyze_kernel(KernelSpec(P, doeblin=DoeblinCertificate(1, nu, 0.1, 0.2)), options)
    assert report.verification["doeblin"] is False
    assert not report.all_verified
    assert 0 <= report.checks[0].witness["row"] < 50


def test_analyze_walk(walk, options):
    report = analyzer.analyze_kernel(walk.to_spec(), options)

    assert report.verification["residual_split"] is True
    assert 2 * math.sqrt(0.21) - 1e-6 <= report.re_upper.hi <= 0.9366
    methods = [step.method for step in report.trace]
    assert methods[:2] == ["spectral_radius_bounds", "doeblin_tail"]
    assert "residual_norm" in methods
    assert report.oracle["truncated"] is True
    assert report.oracle["n_states"] == 301


def test_analyze_walk_stable_across_windows(options):
    """The bound stays at 2√(pq) and the oracle count above it is window independent."""
    above = []
    for x_max in (100, 200, 300):
        report = analyzer.analyze_kernel(build_reflected_walk(0.3, x_max).to_spec(), options)
        assert report.re_upper.hi >= 2 * math.sqrt(0.21) - 1e-6
        above.append(report.oracle["above_re_upper"])
    assert above[0] == above[1] == above[2]


def test_default_reference():
    """Windows get a geometric ν that decays below the light-state level."""
    walk_space = build_reflected_walk(0.3, 40).kernel.space
    nu = analyzer.default_reference(walk_space)
    assert nu.is_probability()
    assert nu.to_dense()[0] == pytest.approx(0.5)
    assert nu.tail_bound == pytest.approx(0.5**41)

    chain_space = random_chain(4, seed=0).space
    np.testing.assert_allclose(analyzer.default_reference(chain_space).to_dense(), 0.25)


def test_analyze_multiplier(options):
    P = random_chain(4, seed=5)
    spec = KernelSpec(P, multiplier=MultiplierSpec((0.0, 1.0, 2.0, 3.0), 0.3))
    report = analyzer.analyze_kernel(spec, options)
    assert "multiplier" in report.extra


def test_certify_walk(walk, options):
    report = analyzer.certify_kernel(walk.to_spec(), options)

    assert report.all_verified
    assert report.verification == {"drift": True, "minorization": True}
    assert report.r_b.lo == pytest.approx(walk.r1, rel=1e-6)
    assert report.re_upper.hi == pytest.approx(2 * math.sqrt(0.21), abs=1e-6)
    assert report.trace[-1].method == "drift_renewal"
    assert report.trace[-1].inputs["b"] == 1.0


def test_certify_reports_failed_drift(walk, options):
    bad = DriftCertificate(walk.drift.C, walk.weight, walk.r1, 1.2)
    spec = KernelSpec(walk.kernel, walk.weight, drift=bad, minorization=walk.minorization)
    report = analyzer.certify_kernel(spec, options)

    assert not report.all_verified
    assert report.verification["drift"] is False
    assert report.re_upper.hi == math.inf
    assert report.r_b is None
    drift_check = report.checks[0]
    assert drift_check.name == "drift"
    assert drift_check.witness["x"] == 0


def test_certify_needs_certificates(options):
    with pytest.raises(ValueError, match="drift and minorization"):
        analyzer.certify_kernel(KernelSpec(random_chain(3, seed=0)), options)


def test_certify_synthesizes_certificates(options):
    """A certificate-free finite chain gets certificates for some P^n."""
    options.synthesize = True
    report = analyzer.certify_kernel(KernelSpec(random_chain(6, seed=1)), options)

    assert report.all_verified
    assert report.verification["renewal_identity"] is True
    assert [step.method for step in report.trace][:2] == ["spectral_radius_bounds", "synthesis"]
    assert report.re_upper.hi < 1.0
    assert report.quasi_compact is True
    assert report.oracle["n_states"] == 6


def test_certify_synthesis_options():
    """n_cap bounds the search; a tiny enumeration limit skips the renewal check."""
    with pytest.raises(NotFound):
        analyzer.certify_kernel(KernelSpec(swap()), AnalysisOptions(synthesize=True, n_cap=1))

    opts = AnalysisOptions(n_power=8, synthesize=True, enumeration_limit=10)
    report = analyzer.certify_kernel(KernelSpec(two_state(0.1, 0.2)), opts)
    assert report.all_verified
    assert "renewal_identity" not in report.verification
    assert report.re_upper.contains(0.71, tol=1e-9)


def test_restrict_spec(walk):
    spec = KernelSpec(
        walk.kernel,
        walk.weight,
        DoeblinCertificate(1, AtomicMeasure.uniform(walk.kernel.space), 0.1, 0.99),
        walk.drift,
        walk.minorization,
    )
    small = analyzer.restrict_spec(spec, 40)

    assert small.kernel.space.size == 40
    assert small.weight.values.size == 41
    assert small.drift.r1 == walk.r1
    assert small.drift.w.space == small.kernel.space
    assert small.minorization.alpha.shape == (41, 41)
    assert small.doeblin is None
    # escaping mass moves into the frontier tail
    assert small.kernel.tails[40] == pytest.approx(0.3)


def test_restrict_spec_rejects_wide_sets(walk):
    far = DriftCertificate(frozenset({0, 50}), walk.weight, walk.r1, walk.drift.eta)
    spec = KernelSpec(walk.kernel, walk.weight, drift=far)
    with pytest.raises(ValueError, match="beyond the window"):
        analyzer.restrict_spec(spec, 40)


def test_prepare_restricts_override_weight(walk):
    opts = AnalysisOptions(weight=walk.weight, window=20)
    spec, w = analyzer.prepare(walk.to_spec(), opts)
    assert spec.kernel.space.size == 20
    assert w.space == spec.kernel.space
    np.testing.assert_allclose(w.values, walk.weight.values[:21])
