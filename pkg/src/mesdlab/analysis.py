"""Stage-3: parameter extraction, bound evaluation, and uncertainty.

Takes a fitted model plus its equivalence-restoring secondary preparations
and reads off the three operational parameters: the confusability c, the
preparation error rate eps, and the discrimination success probability s.
Each parameter has four estimating cells in the probability table; they
are averaged.  The noncontextual bound s_nc = 1 - (c - eps)/2 and the
quantum bound s_q are then evaluated at the extracted (c, eps), giving the
measured advantage ds_exp = s - s_nc and its theoretical ceiling
ds_theory = s_q - s_nc.

Uncertainty is nonparametric: every count cell is resampled binomially and
the whole pipeline (calibration, primary fit, secondary fit, extraction)
is rerun per resample.  The pipeline is nonlinear, so resampling is used
instead of error propagation.  Grid-level agreement between ds_exp and
ds_theory is summarized by an average fidelity that excludes the
no-advantage boundary, where the ratio is undefined.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import noncontextual_bound, quantum_bound
from .errors import (
    BootstrapError,
    ConstraintError,
    ConstraintWarning,
    ConvergenceError,
    IllConditionedError,
    InfeasibleError,
    SingularTransformError,
)
from .equiv import SecondarySolution, solve_secondary
from .sim import CountTable
from .tomo import GptModel, build_frequency_matrix, fit_primary

VIOLATES = "VIOLATES"
NO_VIOLATION = "NO_VIOLATION"

# points with ds_theory at or below this sit on the no-advantage boundary
# and are excluded from the fidelity average
FIDELITY_FLOOR = 1e-6

# admissibility slack eps <= c <= 1 - eps is enforced only this loosely on
# extracted values; raw sampling noise must not kill a whole point
ADMISSIBILITY_TOL = 0.02

_BOOT_FAILURES = (
    ConstraintError,
    ConvergenceError,
    IllConditionedError,
    InfeasibleError,
    SingularTransformError,
    np.linalg.LinAlgError,
)


@dataclass(frozen=True)
class ExtractedParams:
    """Operational parameters read off the secondary preparations.

    Iterates as the plain (c, epsilon, s) triple; clamp_events counts how
    many of the three had to be clamped into [0, 1].
    """

    c: float
    epsilon: float
    s: float
    clamp_events: int = 0

    def __iter__(self):
        return iter((self.c, self.epsilon, self.s))


@dataclass(frozen=True)
class PointEstimate:
    """Everything measured and derived at one grid point.

    c, epsilon, s are the extracted values; s_nc, s_q, ds_exp and
    ds_theory are all evaluated at those extracted values.  ci maps each
    of "c", "eps", "s", "ds_exp" to its bootstrap (mean, std).
    """

    theta: float
    alpha: float
    c: float
    epsilon: float
    s: float
    s_nc: float
    s_q: float
    ds_exp: float
    ds_theory: float
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)
    violation_sigmas: float = 0.0
    clamp_events: int = 0

    def __post_init__(self) -> None:
        if abs(self.s_nc - (1.0 - (self.c - self.epsilon) / 2.0)) > 1e-12:
            raise ValueError("s_nc inconsistent with the record's own c, eps")
        if abs(self.ds_exp - (self.s - self.s_nc)) > 1e-12:
            raise ValueError("ds_exp inconsistent with s - s_nc")


@dataclass(frozen=True)
class GridReport:
    """A processed grid: per-point estimates plus the fidelity summary."""

    points: list[PointEstimate]
    fidelity: float
    excluded_points: list[tuple[float, float]]


@dataclass(frozen=True)
class BootstrapResult:
    """Per-quantity (mean, std) over resamples, plus the failure count."""

    stats: dict[str, tuple[float, float]]
    failures: int


def _clamp01(value: float) -> tuple[float, int]:
    if value < 0.0:
        return 0.0, 1
    if value > 1.0:
        return 1.0, 1
    return value, 0


def extract_parameters(model: GptModel, sol: SecondarySolution) -> ExtractedParams:
    """Average the four estimating cells for each of c, eps, s.

    Pairings use the secondary preparations, so operational equivalence is
    assumed to have been enforced (the solver guarantees it).  Each value
    is clamped to [0, 1]; a ConstraintWarning is issued when the clamped
    values still violate eps <= c <= 1 - eps by more than the tolerance.
    """
    # rows: M_psi, M_phi, M_disc; columns: psi, psi_bar, phi, phi_bar
    p = model.effects[1:] @ sol.secondary_states
    c_raw = float(p[0, 2] + p[1, 0] + (1.0 - p[0, 3]) + (1.0 - p[1, 1])) / 4.0
    eps_raw = float(p[0, 1] + p[1, 3] + (1.0 - p[0, 0]) + (1.0 - p[1, 2])) / 4.0
    s_raw = float(p[2, 2] + p[2, 1] + (1.0 - p[2, 0]) + (1.0 - p[2, 3])) / 4.0
    c, hit_c = _clamp01(c_raw)
    eps, hit_e = _clamp01(eps_raw)
    s, hit_s = _clamp01(s_raw)
    slack = max(eps - c, c - (1.0 - eps))
    if slack > ADMISSIBILITY_TOL:
        warnings.warn(
            f"extracted values violate eps <= c <= 1 - eps by {slack:.4f}"
            f" (c={c:.4f}, eps={eps:.4f})",
            ConstraintWarning,
            stacklevel=2,
        )
    return ExtractedParams(c, eps, s, hit_c + hit_e + hit_s)


def contextual_advantage(
    c: float, epsilon: float, s_measured: float, tol: float = ADMISSIBILITY_TOL
) -> tuple[float, float]:
    """Measured advantage over the noncontextual bound, and its ceiling.

    ds_exp = s_measured - s_nc(c, eps) and ds_theory = s_q(c, eps) -
    s_nc(c, eps), both evaluated at the given (c, eps).  Bound
    admissibility errors propagate.
    """
    s_nc = noncontextual_bound(c, epsilon, tol=tol)
    s_q = quantum_bound(c, epsilon, tol=tol)
    return s_measured - s_nc, s_q - s_nc


def pipeline_once(
    counts: CountTable, init: GptModel | None = None
) -> tuple[GptModel, SecondarySolution, ExtractedParams]:
    """One full pass: calibrate, fit, restore equivalence, extract."""
    freq = build_frequency_matrix(counts)
    model = fit_primary(freq, init=init)
    sol = solve_secondary(model)
    return model, sol, extract_parameters(model, sol)


def bootstrap_pipeline(
    counts: CountTable,
    b: int,
    seed: int,
    base_model: GptModel | None = None,
) -> BootstrapResult:
    """Nonparametric uncertainty for one point's extracted quantities.

    Each count cell is redrawn Binomial(n_total, n1/n_total) and the full
    pipeline is rerun per resample; the replicate fits warm-start from the
    original fit.  Returns (mean, std) for "c", "eps", "s", "ds_exp" and
    the number of failed resamples.  Raises BootstrapError when more than
    10% of the resamples fail.  Exact-frequency tables resample to
    themselves, so their stds are identically zero.
    """
    if b < 2:
        raise ValueError(f"bootstrap needs B >= 2, got {b}")
    if base_model is None:
        base_model, _, _ = pipeline_once(counts)

    exact = not counts.n_total.any()
    if exact:
        _, _, ex = pipeline_once(counts, init=base_model)
        ds_exp, _ = contextual_advantage(ex.c, ex.epsilon, ex.s)
        stats = {
            "c": (ex.c, 0.0),
            "eps": (ex.epsilon, 0.0),
            "s": (ex.s, 0.0),
            "ds_exp": (ds_exp, 0.0),
        }
        return BootstrapResult(stats=stats, failures=0)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    totals = counts.n_total
    p_hat = counts.n_outcome1 / totals
    rows: list[tuple[float, float, float, float]] = []
    failures = 0
    for _ in range(b):
        redrawn = rng.binomial(totals, p_hat).astype(float)
        replicate = CountTable(
            point=counts.point,
            config=counts.config,
            n_outcome1=redrawn,
            n_total=totals,
        )
        try:
            _, _, ex = pipeline_once(replicate, init=base_model)
            ds_exp, _ = contextual_advantage(ex.c, ex.epsilon, ex.s)
        except _BOOT_FAILURES:
            failures += 1
            continue
        rows.append((ex.c, ex.epsilon, ex.s, ds_exp))
    if failures > 0.1 * b:
        raise BootstrapError(
            f"{failures} of {b} bootstrap resamples failed at"
            f" (theta={counts.point.theta:.3f}, alpha={counts.point.alpha:.3f})"
        )
    arr = np.asarray(rows)
    names = ("c", "eps", "s", "ds_exp")
    stats = {
        name: (float(arr[:, k].mean()), float(arr[:, k].std(ddof=1)))
        for k, name in enumerate(names)
    }
    return BootstrapResult(stats=stats, failures=failures)


def process_point(counts: CountTable, b_boot: int, seed: int) -> PointEstimate:
    """Full per-point analysis: estimate, bounds, bootstrap, significance."""
    model, _, ex = pipeline_once(counts)
    s_nc = noncontextual_bound(ex.c, ex.epsilon, tol=ADMISSIBILITY_TOL)
    s_q = quantum_bound(ex.c, ex.epsilon, tol=ADMISSIBILITY_TOL)
    boot = bootstrap_pipeline(counts, b_boot, seed, base_model=model)
    ds_exp = ex.s - s_nc
    std_ds = boot.stats["ds_exp"][1]
    if std_ds > 0.0:
        sigmas = ds_exp / std_ds
    else:
        sigmas = math.inf if ds_exp > 0.0 else 0.0
    return PointEstimate(
        theta=counts.point.theta,
        alpha=counts.point.alpha,
        c=ex.c,
        epsilon=ex.epsilon,
        s=ex.s,
        s_nc=s_nc,
        s_q=s_q,
        ds_exp=ds_exp,
        ds_theory=s_q - s_nc,
        ci=boot.stats,
        violation_sigmas=sigmas,
        clamp_events=ex.clamp_events,
    )


def grid_fidelity(
    points: list[PointEstimate],
) -> tuple[float, list[tuple[float, float]]]:
    """Average relative agreement of ds_exp with ds_theory over a grid.

    f = 1 - (1/N) sum |ds_exp - ds_theory| / ds_theory over the N points
    with ds_theory above the floor; boundary points are returned in the
    exclusion list, never silently dropped.
    """
    if not points:
        raise ValueError("grid_fidelity needs at least one point")
    excluded = [
        (pe.theta, pe.alpha) for pe in points if pe.ds_theory <= FIDELITY_FLOOR
    ]
    kept = [pe for pe in points if pe.ds_theory > FIDELITY_FLOOR]
    if not kept:
        raise ConstraintError(
            "fidelity undefined: every point sits on the no-advantage boundary"
        )
    losses = [abs(pe.ds_exp - pe.ds_theory) / pe.ds_theory for pe in kept]
    return 1.0 - float(np.mean(losses)), excluded


def grid_report(points: list[PointEstimate]) -> GridReport:
    fidelity, excluded = grid_fidelity(points)
    return GridReport(points=list(points), fidelity=fidelity, excluded_points=excluded)


def violation_verdict(pe: PointEstimate, k_sigma: float = 3.0) -> str:
    """VIOLATES iff ds_exp exceeds k_sigma bootstrap deviations above zero."""
    if "ds_exp" not in pe.ci:
        raise ValueError("verdict needs bootstrap stats for ds_exp")
    std = pe.ci["ds_exp"][1]
    return VIOLATES if pe.ds_exp > k_sigma * std else NO_VIOLATION
