import json
import math

import numpy as np
import pytest
from conftest import uniform
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from matverify import (
    DenseMatrix,
    DomainError,
    ElementPerturb,
    ExperimentConfig,
    SeededStream,
    SparsePerturb,
    TolerancePolicy,
    apply_fault,
    magnitude_sweep,
    normal_cdf,
    oracle_multiply,
    run_experiment,
    sample_gaussian,
    sigma_tilde,
    theorem2_bound,
)
from matverify.analysis import binomial_interval, central_mass
from matverify.matrix import component_tolerances
from matverify.verifiers import reference_tolerance

# standard normal CDF at 50 significant digits (mpmath.ncdf), rounded to binary64
PHI_REFERENCE = {
    0.0: 0.5,
    0.5: 0.6914624612740131,
    -0.5: 0.3085375387259869,
    1.0: 0.8413447460685429,
    -1.0: 0.15865525393145705,
    2.0: 0.9772498680518208,
    -2.0: 0.02275013194817921,
    6.0: 0.9999999990134123,
    -6.0: 9.86587645037698e-10,
}


@pytest.mark.parametrize("x", sorted(PHI_REFERENCE))
def test_phi_against_high_precision(x):
    assert abs(normal_cdf(x) - PHI_REFERENCE[x]) <= 1e-15


def test_phi_tails():
    assert normal_cdf(math.inf) == 1.0 and normal_cdf(-math.inf) == 0.0
    assert normal_cdf(-37.0) > 0.0  # erfc keeps the far tail


def test_central_mass_small_argument_no_cancellation():
    x = 1e-20
    assert central_mass(x) == pytest.approx(x * math.sqrt(2 / math.pi), rel=1e-12)


# -- sigma tilde --------------------------------------------------------------------


def test_sigma_tilde_worked_example():
    sigma, rows = sigma_tilde(DenseMatrix([[-1, 1], [1, -1]]))
    assert sigma == math.sqrt(2) and rows.tolist() == [math.sqrt(2)] * 2


def test_sigma_tilde_zero():
    sigma, rows = sigma_tilde(DenseMatrix.zeros(3, 2))
    assert sigma == 0.0 and rows.tolist() == [0.0] * 3


@settings(max_examples=100)
@given(st.integers(0, 4), st.integers(0, 5), st.floats(-1e100, 1e100).filter(lambda d: d != 0 and abs(d) > 1e-100))
def test_sigma_tilde_single_entry(i, j, d):
    data = np.zeros((5, 6))
    data[i, j] = d
    assert sigma_tilde(DenseMatrix(data))[0] == abs(d)


def test_sigma_tilde_nonfinite_row():
    sigma, rows = sigma_tilde(DenseMatrix.corrupted([[math.nan, 0.0], [1.0, 0.0]]))
    assert sigma == math.inf and rows[1] == 1.0


# -- bound --------------------------------------------------------------------------


def test_bound_worked_example():
    report = theorem2_bound(DenseMatrix([[-1, 1], [1, -1]]), 1e-12)
    assert report.sigma_tilde == math.sqrt(2)
    assert report.bound_dependent == pytest.approx(5.641895835477563e-13, rel=1e-12)
    assert abs(report.bound_dependent / report.bound_approx - 1) <= 1e-3
    # identical row norms: the product of two identical factors
    assert report.bound_independent == pytest.approx(report.bound_dependent**2, rel=1e-12)


def test_bound_large_epsilon_tends_to_one():
    report = theorem2_bound(DenseMatrix([[1.0, 0.0]]), 1e6)
    assert report.bound_dependent == 1.0


def test_bound_iterated_exact():
    report = theorem2_bound(DenseMatrix([[0.3, -0.2], [0.1, 0.0]]), 0.05, k=3)
    assert report.bound_iterated == report.bound_dependent**3


def test_bound_degenerate():
    report = theorem2_bound(DenseMatrix.zeros(2, 2), 1e-9)
    assert report.degenerate
    assert report.bound_dependent == report.bound_independent == report.bound_iterated == 1.0


def test_bound_zero_rows_excluded():
    with_zero = theorem2_bound(DenseMatrix([[0.0, 0.0], [0.0, 2.0]]), 0.1)
    alone = theorem2_bound(DenseMatrix([[0.0, 2.0]]), 0.1)
    assert with_zero.bound_independent == alone.bound_independent
    assert with_zero.sigma_tilde == 2.0


@pytest.mark.parametrize("eps", [0.0, -1.0, math.nan])
def test_bound_rejects_bad_epsilon(eps):
    with pytest.raises(DomainError):
        theorem2_bound(DenseMatrix([[1.0]]), eps)


deltas = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(-1e3, 1e3))


@settings(max_examples=200)
@given(deltas, st.floats(1e-15, 1e3))
def test_bound_ordering(values, eps):
    report = theorem2_bound(DenseMatrix(values), eps)
    assert 0.0 <= report.bound_independent <= report.bound_dependent <= 1.0


@settings(max_examples=200)
@given(deltas, st.floats(1e-300, 1e-3))
def test_bound_below_linearization(values, ratio):
    sigma, _ = sigma_tilde(DenseMatrix(values))
    if sigma == 0 or ratio * sigma == 0:
        return
    report = theorem2_bound(DenseMatrix(values), ratio * sigma)
    if report.epsilon / report.sigma_tilde <= 1e-3:
        assert report.bound_dependent <= report.bound_approx * (1 + 1e-3)


def test_bound_json_keys():
    d = theorem2_bound(DenseMatrix([[1.0]]), 0.5, 2).to_dict()
    assert set(d) >= {
        "sigma_tilde", "sigma_rows", "epsilon", "bound_dependent",
        "bound_independent", "bound_approx", "k", "bound_iterated",
    }
    json.dumps(d)


# -- experiments --------------------------------------------------------------------


def test_binomial_interval():
    lo, hi = binomial_interval(50, 100)
    assert lo == pytest.approx(0.5 - 1.96 * 0.05) and hi == pytest.approx(0.5 + 1.96 * 0.05)
    assert binomial_interval(0, 100) == [0.0, 0.0]
    assert binomial_interval(0, 0) is None


def test_checksum_scheme_misses_column_swap():
    report = run_experiment(ExperimentConfig(method="huang-abraham", fault="colswap:0,1", matrix_source="paper2x2", trials=1))
    assert report.false_positives == 1 and report.detections == 0


def test_gvfa_catches_column_swap():
    report = run_experiment(ExperimentConfig(method="gvfa", fault="colswap:0,1", matrix_source="paper2x2", trials=10_000))
    assert report.false_positives == 0 and report.detections == 10_000
    assert report.bound.sigma_tilde == math.sqrt(2)


def test_freivalds_paired_columns_half():
    cfg = ExperimentConfig(method="freivalds", fault="adversarial-paired-columns", shape=8, trials=10_000, seed=42)
    report = run_experiment(cfg)
    assert abs(report.empirical_fp_rate - 0.5) <= 3 * math.sqrt(0.25 / 10_000)


def test_dependent_bound_is_tight_for_rank_one_delta():
    # Delta rows are +-(1, -1): both g_i equal +-(w1 - w2), so acceptance under an
    # absolute threshold eps happens exactly when |w1 - w2| <= eps
    eps, trials = 0.5, 20_000
    cfg = ExperimentConfig(
        method="gvfa", fault="colswap:0,1", matrix_source="paper2x2", trials=trials, policy=TolerancePolicy.absolute(eps)
    )
    report = run_experiment(cfg)
    p = math.erf(eps / 2)
    assert report.bound.bound_dependent == pytest.approx(p, rel=1e-14)
    assert abs(report.empirical_fp_rate - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def _fixed_source(mats):
    return lambda rng, shapes: mats


def test_detection_rate_matches_direct_simulation():
    # oracle: vectorised residuals and tolerances for the same vectors, no verifier code
    rng = np.random.default_rng(5)
    a, b = uniform(rng, 4, 4), uniform(rng, 4, 4)
    c = oracle_multiply(a, b)
    omega = np.random.default_rng(6).standard_normal((4, 20_000))
    tau = 4 * 4 * 2.0**-53 * (np.abs(a.data) @ (np.abs(b.data) @ np.abs(omega)) + np.abs(c.data) @ np.abs(omega))
    delta = 3.0 * float(np.median(tau))
    row, col = 1, 2
    oracle_rate = float(np.mean(np.abs(delta * omega[col]) > tau[row]))

    trials = 20_000
    cfg = ExperimentConfig(
        method="gvfa", fault=ElementPerturb(row, col, delta), shape=4, trials=trials,
        matrix_source=_fixed_source([a, b]), resample_matrices=False,
    )
    rate = run_experiment(cfg).detection_rate
    noise = 4 * math.sqrt(oracle_rate * (1 - oracle_rate) * (2 / trials))
    assert abs(rate - oracle_rate) <= noise + 0.01  # allows for the rounding noise in the residual


def test_tiny_fault_mostly_missed():
    rng = np.random.default_rng(8)
    a, b = uniform(rng, 4, 4), uniform(rng, 4, 4)
    c = oracle_multiply(a, b)
    w = sample_gaussian(4, SeededStream(0xC0FFEE, 0)).values
    delta = 0.1 * float(np.min(component_tolerances(a, b, c, w)))
    fault = ElementPerturb(0, 0, delta)
    assert not apply_fault(c, fault)[1]
    cfg = ExperimentConfig(
        method="gvfa", fault=fault, shape=4, trials=10_000,
        matrix_source=_fixed_source([a, b]), resample_matrices=False,
    )
    assert run_experiment(cfg).detection_rate <= 0.05


def test_tally_invariants():
    cfg = ExperimentConfig(method="gvfa", fault="random-element", delta=1e-13, shape=6, trials=500, seed=3)
    r = run_experiment(cfg)
    assert r.false_positives + r.detections + r.neutral_injections == r.trials
    assert r.empirical_fp_rate == r.false_positives / (r.trials - r.neutral_injections)
    lo, hi = r.empirical_fp_rate_ci
    assert lo <= r.empirical_fp_rate <= hi


def test_neutral_injections_counted():
    a = DenseMatrix([[1.0, 2.0], [3.0, 4.0]])
    b = DenseMatrix([[1.0, 1.0], [2.0, 2.0]])  # identical columns in every product
    cfg = ExperimentConfig(method="gvfa", fault="colswap:0,1", shape=2, trials=20, matrix_source=_fixed_source([a, b]))
    r = run_experiment(cfg)
    assert r.neutral_injections == 20 and r.false_positives == r.detections == 0
    assert r.empirical_fp_rate is None and r.bound is None


def test_no_fault_all_accept():
    r = run_experiment(ExperimentConfig(method="gvfa", shape=16, trials=300, k=3))
    assert r.detections == 0 and r.detection_rate == 0.0


def test_reproducible():
    cfg = ExperimentConfig(method="freivalds", fault="random-element", delta=1e-12, shape=(5, 4, 6), trials=300, k=2, seed=77)
    first, second = run_experiment(cfg).to_dict(), run_experiment(cfg).to_dict()
    first.pop("wall_time"), second.pop("wall_time")
    assert first == second


def test_report_json_keys():
    r = run_experiment(ExperimentConfig(method="gvfa", fault="element:0,0,1.0", shape=3, trials=5))
    d = json.loads(r.to_json())
    for key in (
        "method", "fault_spec", "n", "k", "trials", "false_positives", "detections",
        "neutral_injections", "empirical_fp_rate", "empirical_fp_rate_ci", "bound", "wall_time", "seed",
    ):
        assert key in d
    assert d["fault_spec"] == "element:0,0,1.0"


def test_rowcol_localization_tallied():
    cfg = ExperimentConfig(method="gvfa-rowcol", fault="element:3,4,1.0", shape=8, trials=200)
    r = run_experiment(cfg)
    assert r.detections == 200 and r.exact_localizations == 200


@pytest.mark.parametrize("method", ["chain", "poly", "huang-abraham"])
def test_other_methods_run(method):
    r = run_experiment(ExperimentConfig(method=method, fault="random-element", delta=1.0, shape=5, trials=50, chain_length=3))
    assert r.detections == 50


@pytest.mark.parametrize(
    "kwargs",
    [
        {"trials": 0},
        {"k": 0},
        {"method": "nope"},
        {"shape": (2, 0, 2)},
        {"delta_scale": "relative"},
        {"matrix_source": "gaussian"},
        {"fault": "swap:0,1"},
        {"chain_length": 1},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        ExperimentConfig(**kwargs)


# -- magnitude sweep ------------------------------------------------------------------


def test_sweep_monotone_small():
    base = ExperimentConfig(method="gvfa", shape=16, trials=1000, k=2, delta_scale="tolerance", seed=9)
    reports = magnitude_sweep(base, [0.0, 0.1, 1.0, 10.0, 1e3])
    rates = [r.detection_rate for r in reports]
    assert rates[0] == 0.0 and reports[0].fault_spec is not None
    assert rates[1] <= 0.05
    assert rates[-1] == 1.0
    for lo, hi, r in zip(rates, rates[1:], reports):
        assert hi + 3 * math.sqrt(lo * (1 - lo) / r.trials + 1e-12) >= lo


def test_sweep_rejects_bad_deltas():
    base = ExperimentConfig(method="gvfa", shape=4, trials=10)
    with pytest.raises(DomainError):
        magnitude_sweep(base, [1.0, 0.5])
    with pytest.raises(DomainError):
        magnitude_sweep(base, [-1.0])


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32), st.floats(1e3, 1e8))
def test_large_multi_entry_faults_never_accepted(n, seed, scale):
    # every entry perturbed by d: each residual is d*sum(w), hidden only when
    # |sum(w)| < tau/d, i.e. with probability below 1e-3 per round
    rng = np.random.default_rng(seed)
    a, b = uniform(rng, n, n), uniform(rng, n, n)
    c = oracle_multiply(a, b)
    d = scale * reference_tolerance("gvfa", a, b, c, SeededStream(seed))
    cells = tuple((i, j, d) for i in range(n) for j in range(n))
    cfg = ExperimentConfig(
        method="gvfa", fault=SparsePerturb(cells), shape=n, trials=200, k=2,
        matrix_source=_fixed_source([a, b]), resample_matrices=False, seed=seed,
    )
    assert run_experiment(cfg).false_positives == 0
