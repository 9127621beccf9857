"""False-positive bounds for Gaussian projection checks and the Monte Carlo engine.

For a wrong product with error matrix ``D = A@B - C`` and a standard normal
vector ``w``, each residual ``g_i = (D w)_i`` is ``N(0, s_i**2)`` with
``s_i = ||D[i, :]||_2``. A check with threshold ``eps`` can only accept if
every ``|g_i| <= eps``, which gives the bounds computed by
:func:`theorem2_bound`.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .exceptions import DomainError
from .faults import (
    ElementPerturb,
    FaultSpec,
    adversarial_paired_columns,
    apply_fault,
    parse_fault,
)
from .fixtures import paper2x2
from .matrix import (
    DEFAULT_POLICY,
    SEPARATE,
    AccumulationMode,
    DenseMatrix,
    TolerancePolicy,
    chain_tolerances,
    oracle_multiply,
    subtract,
)
from .sampling import DEFAULT_SEED, RESERVED_LANE, SeededStream, sample_gaussian
from .verifiers import METHODS, chain_verify, reference_tolerance, verify

log = logging.getLogger(__name__)

MATRIX_LANE = RESERVED_LANE
FAULT_LANE = RESERVED_LANE + 1

FAULT_FAMILIES = ("adversarial-paired-columns", "random-element")


def normal_cdf(x: float) -> float:
    """Standard normal CDF, accurate to ~1e-16 absolute over the real line."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def central_mass(x: float) -> float:
    """``2*Phi(|x|) - 1``, evaluated as ``erf(|x|/sqrt 2)`` to avoid cancellation."""
    return math.erf(abs(x) / math.sqrt(2.0))


def sigma_tilde(delta: DenseMatrix) -> tuple[float, np.ndarray]:
    """Row norms of the error matrix and their maximum.

    Non-finite rows (corrupted entries) get an infinite norm.
    """
    d = delta.data if isinstance(delta, DenseMatrix) else np.asarray(delta, dtype=np.float64)
    rows = np.sqrt(np.sum(d * d, axis=1))
    rows = np.where(np.isnan(rows), np.inf, rows)
    return float(np.max(rows)), rows


@dataclass
class BoundReport:
    sigma_tilde: float
    sigma_rows: list
    epsilon: float
    bound_dependent: float
    bound_independent: float
    bound_approx: float
    k: int
    bound_iterated: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "sigma_tilde": _num(self.sigma_tilde),
            "sigma_rows": [_num(v) for v in self.sigma_rows],
            "epsilon": _num(self.epsilon),
            "bound_dependent": _num(self.bound_dependent),
            "bound_independent": _num(self.bound_independent),
            "bound_approx": _num(self.bound_approx),
            "k": self.k,
            "bound_iterated": _num(self.bound_iterated),
            "degenerate": self.degenerate,
        }


def _num(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def theorem2_bound(delta: DenseMatrix, epsilon: float, k: int = 1) -> BoundReport:
    """Upper bounds on the probability a Gaussian check accepts a wrong product.

    ``bound_dependent`` is ``2*Phi(eps/sigma) - 1`` with ``sigma`` the largest
    row norm; ``bound_independent`` multiplies the per-row factors and holds
    only if the ``g_i`` are independent; ``bound_approx`` is the small-argument
    linearization ``(eps/sigma) * sqrt(2/pi)``. Rows of zeros never witness a
    fault and are left out of both the max and the product. An all-zero
    error matrix is flagged degenerate and every bound is 1.
    """
    if not (epsilon > 0):
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if k < 1:
        raise DomainError(f"k must be positive, got {k}")
    sigma, rows = sigma_tilde(delta)
    if sigma == 0:
        return BoundReport(0.0, rows.tolist(), epsilon, 1.0, 1.0, 1.0, k, 1.0, degenerate=True)

    dependent = central_mass(epsilon / sigma)
    independent = 1.0
    for s in rows:
        if s > 0:
            independent *= central_mass(epsilon / s)
    approx = (epsilon / sigma) * math.sqrt(2.0 / math.pi)
    return BoundReport(sigma, rows.tolist(), epsilon, dependent, independent, approx, k, dependent**k)


# -- experiments --------------------------------------------------------------------


def _uniform_source(rng: np.random.Generator, shapes):
    return [DenseMatrix(rng.uniform(-1.0, 1.0, size=s)) for s in shapes]


def _graded_source(rng: np.random.Generator, shapes):
    # rows scaled over eight decades: wide dynamic range, heavy cancellation
    out = []
    for rows, cols in shapes:
        scale = np.logspace(0, -8, rows)[:, None]
        out.append(DenseMatrix(rng.uniform(-1.0, 1.0, size=(rows, cols)) * scale))
    return out


MATRIX_SOURCES = {"uniform": _uniform_source, "graded": _graded_source}


@dataclass
class ExperimentConfig:
    """One Monte Carlo experiment.

    ``fault`` is a :data:`FaultSpec`, a grammar string, one of
    :data:`FAULT_FAMILIES`, or ``None`` for no fault. Family faults take their
    magnitude from ``delta``; with ``delta_scale="tolerance"`` it is
    multiplied by the largest tolerance the verifier applies in that trial.
    ``matrix_source`` is ``"uniform"``, ``"graded"``, ``"paper2x2"`` or a
    callable ``(rng, shapes) -> list[DenseMatrix]``.
    """

    method: str = "gvfa"
    shape: tuple = (8, 8, 8)
    fault: Union[FaultSpec, str, None] = None
    delta: float = 1.0
    delta_scale: str = "absolute"
    k: int = 1
    trials: int = 1000
    seed: int = DEFAULT_SEED
    policy: TolerancePolicy = DEFAULT_POLICY
    mode: AccumulationMode = SEPARATE
    matrix_source: Union[str, Callable] = "uniform"
    resample_matrices: bool = True
    chain_length: int = 2

    def __post_init__(self):
        if isinstance(self.shape, int):
            self.shape = (self.shape, self.shape, self.shape)
        self.shape = tuple(int(s) for s in self.shape)
        if len(self.shape) != 3 or min(self.shape) < 1:
            raise DomainError(f"shape must be (m, p, n) with positive entries, got {self.shape}")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.trials < 1:
            raise DomainError(f"trials must be at least 1, got {self.trials}")
        if self.k < 1:
            raise DomainError(f"k must be at least 1, got {self.k}")
        if self.delta_scale not in ("absolute", "tolerance"):
            raise DomainError(f"delta_scale must be 'absolute' or 'tolerance', got {self.delta_scale!r}")
        if self.chain_length < 2:
            raise DomainError(f"chain_length must be at least 2, got {self.chain_length}")
        if isinstance(self.fault, str) and self.fault not in FAULT_FAMILIES:
            self.fault = parse_fault(self.fault)
        self.mode = AccumulationMode.parse(self.mode)
        if self.matrix_source == "paper2x2":
            self.shape = (2, 2, 2)
        elif not callable(self.matrix_source) and self.matrix_source not in MATRIX_SOURCES:
            raise DomainError(f"unknown matrix source {self.matrix_source!r}")

    def fault_label(self) -> Optional[str]:
        if self.fault is None:
            return None
        if isinstance(self.fault, str):
            return f"{self.fault}({self.delta!r}, {self.delta_scale})"
        return self.fault.to_grammar()

    def factor_shapes(self):
        m, p, n = self.shape
        if self.method == "chain":
            return [(m, p)] + [(p, p)] * (self.chain_length - 2) + [(p, n)]
        return [(m, p), (p, n)]


@dataclass
class ExperimentReport:
    method: str
    fault_spec: Optional[str]
    n: list
    k: int
    trials: int
    false_positives: int
    detections: int
    neutral_injections: int
    empirical_fp_rate: Optional[float]
    empirical_fp_rate_ci: Optional[list]
    detection_rate: Optional[float]
    exact_localizations: Optional[int]
    bound: Optional[BoundReport]
    wall_time: float
    seed: int
    mode: str = "separate"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bound"] = self.bound.to_dict() if self.bound is not None else None
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def binomial_interval(successes: int, total: int, z: float = 1.96) -> Optional[list]:
    """Normal-approximation interval, clipped to [0, 1]."""
    if total <= 0:
        return None
    p = successes / total
    half = z * math.sqrt(p * (1.0 - p) / total)
    return [max(0.0, p - half), min(1.0, p + half)]


def _make_matrices(config: ExperimentConfig, stream: SeededStream):
    if config.matrix_source == "paper2x2":
        a, b, _, _ = paper2x2()
        return [a, b]
    source = config.matrix_source
    if not callable(source):
        source = MATRIX_SOURCES[source]
    rng = stream.with_lane(MATRIX_LANE).generator()
    return list(source(rng, config.factor_shapes()))


def _product(factors, mode):
    c = factors[0]
    for f in factors[1:]:
        c = oracle_multiply(c, f, mode)
    return c


def _run_verifier(config, factors, c, stream):
    if config.method == "chain":
        return chain_verify(factors, c, config.k, stream, config.policy, config.mode), None
    a, b = factors
    return verify(config.method, a, b, c, config.k, stream, config.policy, config.mode)


def _reference_tolerance(config, factors, c, stream) -> float:
    if config.method == "chain":
        omega = sample_gaussian(c.cols, stream).values
        return float(np.max(chain_tolerances(factors, c, omega, config.policy)))
    a, b = factors
    return reference_tolerance(config.method, a, b, c, stream, config.policy)


def _resolve_fault(config, factors, c, stream):
    """Concrete fault for this trial, or None when no fault is injected."""
    fault = config.fault
    if fault is None or not isinstance(fault, str):
        return fault
    magnitude = config.delta
    if config.delta_scale == "tolerance" and magnitude != 0:
        magnitude *= _reference_tolerance(config, factors, c, stream)
    if magnitude == 0:
        return None
    if fault == "adversarial-paired-columns":
        return adversarial_paired_columns(c.shape, magnitude)
    rng = stream.with_lane(FAULT_LANE).generator()
    row = int(rng.integers(c.rows))
    col = int(rng.integers(c.cols))
    return ElementPerturb(row, col, magnitude)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Inject the configured fault into ``trials`` products and tally verdicts.

    Trial ``t`` uses stream index ``t`` for its projection vectors, matrices
    and fault placement, so a report is a pure function of the config. An
    accepted faulty product counts as a false positive; with no fault every
    acceptance is still tallied under ``false_positives`` and
    ``detection_rate`` is then the false-rejection rate.
    """
    start = time.perf_counter()
    fixed = None
    if not config.resample_matrices or config.matrix_source == "paper2x2":
        factors = _make_matrices(config, SeededStream(config.seed, 0))
        fixed = (factors, _product(factors, config.mode))

    false_positives = detections = neutral = localized = 0
    bound = None
    track_cells = config.method in ("gvfa-rowcol", "huang-abraham") and config.fault is not None

    # same matrices and a fault that does not depend on the trial: inject once
    invariant = None
    if fixed is not None and (
        not isinstance(config.fault, str)
        or (config.fault == "adversarial-paired-columns" and config.delta_scale == "absolute")
    ):
        factors, c = fixed
        spec = _resolve_fault(config, factors, c, SeededStream(config.seed, 0))
        invariant = (spec,) + ((c, False) if spec is None else apply_fault(c, spec))

    for trial in range(config.trials):
        stream = SeededStream(config.seed, trial)
        if fixed is None:
            factors = _make_matrices(config, stream)
            c = _product(factors, config.mode)
        else:
            factors, c = fixed

        if invariant is not None:
            spec, c_faulted, is_neutral = invariant
        else:
            spec = _resolve_fault(config, factors, c, stream)
            if spec is None:
                c_faulted, is_neutral = c, False
            else:
                c_faulted, is_neutral = apply_fault(c, spec)
        if is_neutral:
            neutral += 1
            continue

        if bound is None:
            eps = _reference_tolerance(config, factors, c_faulted, stream)
            if not (eps > 0 and math.isfinite(eps)):
                eps = float(np.finfo(float).tiny)
            bound = theorem2_bound(subtract(c, c_faulted), eps, config.k)

        verdict, report = _run_verifier(config, factors, c_faulted, stream)
        if verdict.accepted:
            false_positives += 1
        else:
            detections += 1
        if track_cells and report is not None and isinstance(spec, ElementPerturb):
            if report.implicated_cells == {(spec.row, spec.col)}:
                localized += 1

    effective = config.trials - neutral
    fp_rate = false_positives / effective if effective else None
    return ExperimentReport(
        method=config.method,
        fault_spec=config.fault_label(),
        n=list(config.shape),
        k=config.k,
        trials=config.trials,
        false_positives=false_positives,
        detections=detections,
        neutral_injections=neutral,
        empirical_fp_rate=fp_rate,
        empirical_fp_rate_ci=binomial_interval(false_positives, effective),
        detection_rate=detections / effective if effective else None,
        exact_localizations=localized if track_cells else None,
        bound=bound,
        wall_time=time.perf_counter() - start,
        seed=config.seed,
        mode=config.mode.value,
    )


def magnitude_sweep(base_config: ExperimentConfig, deltas: Sequence[float]) -> list[ExperimentReport]:
    """Run ``base_config`` once per fault magnitude.

    The fault family defaults to ``"random-element"``. ``0`` means no fault.
    Detection rates are expected to be nondecreasing in ``delta``; a drop
    larger than three binomial standard errors is logged as a warning.
    """
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise DomainError("fault magnitudes must be nonnegative")
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("fault magnitudes must be nondecreasing")
    family = base_config.fault if isinstance(base_config.fault, str) else "random-element"

    reports = [run_experiment(replace(base_config, fault=family, delta=d)) for d in deltas]

    for lo, hi in zip(reports, reports[1:]):
        if lo.detection_rate is None or hi.detection_rate is None:
            continue
        noise = 3.0 * math.sqrt(
            lo.detection_rate * (1 - lo.detection_rate) / lo.trials
            + hi.detection_rate * (1 - hi.detection_rate) / hi.trials
        )
        if hi.detection_rate + noise < lo.detection_rate:
            log.warning(
                "detection rate fell from %.4f to %.4f as the fault grew",
                lo.detection_rate,
                hi.detection_rate,
            )
    return reports
