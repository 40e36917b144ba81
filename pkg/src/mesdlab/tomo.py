"""Stage-1 fit: rank-4 GPT factorization of calibrated frequencies.

A scan point's calibrated 5x6 frequency matrix (unit row plus four
measurement rows) is factored as F ~ E S with E a 5x4 effect matrix whose
first row is pinned to the unit effect u = (1, 0, 0, 0) and S a 4x6 state
matrix whose first row is pinned to 1 (normalization u . s_j = 1).  The
factorization minimizes the binomially weighted chi-squared by alternating
closed-form least squares, starting from the ideal quantum model, and makes
no positivity or Bloch-ball assumption.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MEAS_LABELS,
    PREP_LABELS,
    GridPoint,
    measurement_effect,
    prepare_state,
)
from .errors import (
    ConstraintError,
    ConvergenceError,
    IllConditionedError,
    RankDeficiencyWarning,
    SingularTransformError,
)
from .sim import CountTable, calibrate_detection

# 24 data cells against 34 raw parameters minus the 12-dimensional gauge
# group that preserves both pinned rows: 24 - 22.
FIT_DOF = 2

_UNIT_EFFECT = np.array([1.0, 0.0, 0.0, 0.0])
_MAX_ITER = 10_000
_IMPROVEMENT_TOL = 1e-10
_RIDGE = 1e-12


@dataclass(frozen=True)
class FrequencyMatrix:
    """Calibrated frequencies and standard errors for one scan point.

    Row 0 is the unit effect (exactly ones); rows 1-4 are the four
    measurements in M_psi, M_phi, M_disc, M_y order; columns follow the
    six preparations.  ``shots = 0`` marks exact frequencies, where sigma
    is a uniform 1 (the fit degenerates to unweighted least squares).
    """

    point: GridPoint
    values: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    shots: int = 0

    def __post_init__(self):
        if self.values.shape != (5, 6) or self.sigma.shape != (5, 6):
            raise ConstraintError("frequency and sigma matrices must have shape (5, 6)")
        if not np.all(self.values[0] == 1.0):
            raise ConstraintError("row 0 must be the unit effect (all ones)")
        if not np.all((self.values >= 0.0) & (self.values <= 1.0)):
            raise ConstraintError("frequencies must lie in [0, 1]")
        if not np.all(np.isfinite(self.sigma[1:])) or np.any(self.sigma[1:] <= 0.0):
            raise ConstraintError("data-cell sigma must be finite and positive")


@dataclass(frozen=True)
class GptModel:
    """Rank-4 factorization of a frequency matrix.

    ``effects`` rows are GPT effect vectors (row 0 = unit effect);
    ``states`` columns are GPT state vectors with first coordinate 1.
    """

    point: GridPoint
    effects: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    chi_squared: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        if self.effects.shape != (5, 4) or self.states.shape != (4, 6):
            raise ConstraintError("effects must be (5, 4) and states (4, 6)")
        if not np.array_equal(self.effects[0], _UNIT_EFFECT):
            raise ConstraintError("effect row 0 must be the unit effect")
        if not np.all(self.states[0] == 1.0):
            raise ConstraintError("state normalization u . s = 1 violated")
        recon = self.reconstruction()
        if recon.min() < -0.05 or recon.max() > 1.05:
            raise ConstraintError(
                f"reconstructed table leaves [-0.05, 1.05]: range "
                f"[{recon.min():.4f}, {recon.max():.4f}]"
            )

    def reconstruction(self) -> np.ndarray:
        """Model probability table effects @ states, shape (5, 6)."""
        return self.effects @ self.states


def build_frequency_matrix(
    counts: CountTable, detector: tuple[float, float] | None = None
) -> FrequencyMatrix:
    """Calibrate raw counts into a frequency matrix with binomial errors.

    ``detector`` overrides the (e01, e10) recorded in the count table's
    config.  Standard errors use sqrt(f(1-f)/N) floored at 1/(2N), then
    pass through the same linear calibration as the frequencies.
    """
    if detector is None:
        detector = (counts.config.e_bright_given_dark, counts.config.e_dark_given_bright)
    e01, e10 = detector
    denom = 1.0 - e01 - e10
    raw = counts.frequencies()
    if not np.all(np.isfinite(raw)):
        raise ConstraintError("count table contains non-finite cells")
    exact = counts.config.shots == 0
    if not exact and np.any(counts.n_total <= 0):
        raise ConstraintError("count table has empty cells")
    values = np.ones((5, 6))
    values[1:] = np.clip((raw - e01) / denom, 0.0, 1.0)
    sigma = np.ones((5, 6))
    if not exact:
        n = counts.n_total.astype(float)
        sigma[1:] = np.maximum(np.sqrt(raw * (1.0 - raw) / n), 0.5 / n) / denom
    return FrequencyMatrix(
        point=counts.point, values=values, sigma=sigma, shots=counts.config.shots
    )


def ideal_model(point: GridPoint) -> GptModel:
    """The exact quantum model at a scan point, in the canonical gauge."""
    axes = np.array(
        [measurement_effect(m, point.theta, point.alpha).as_array() for m in MEAS_LABELS]
    )
    effects = np.vstack([_UNIT_EFFECT, np.hstack([np.full((4, 1), 0.5), 0.5 * axes])])
    bloch = np.array(
        [prepare_state(p, point.state_angle).as_array() for p in PREP_LABELS]
    ).T
    states = np.vstack([np.ones(6), bloch])
    return GptModel(point=point, effects=effects, states=states)


def _chi_squared(values, sigma, effects, states) -> float:
    resid = (values[1:] - effects[1:] @ states) / sigma[1:]
    return float(np.sum(resid * resid))


def fit_primary(freq: FrequencyMatrix, init: GptModel | None = None) -> GptModel:
    """Alternating weighted least squares for the rank-4 factorization.

    ``init`` warm-starts the iteration (bootstrap replicates reuse the
    base fit); by default it starts from the ideal quantum model.  Each
    sweep solves all state columns then all effect rows in closed form;
    chi-squared descends monotonically and iteration stops once the
    improvement drops below 1e-10.
    """
    if init is None:
        init = ideal_model(freq.point)
    effects = np.array(init.effects, dtype=float)
    states = np.array(init.states, dtype=float)
    values, sigma = freq.values, freq.sigma
    weights = 1.0 / (sigma[1:] * sigma[1:])
    data = values[1:]
    eye3, eye4 = np.eye(3), np.eye(4)

    chi2 = _chi_squared(values, sigma, effects, states)
    iterations = 0
    converged = False
    for iterations in range(1, _MAX_ITER + 1):
        em = effects[1:]
        # state columns: (1, x_j) with x_j from 3x3 normal equations
        a = np.einsum("ij,ik,il->jkl", weights, em[:, 1:], em[:, 1:])
        rhs = np.einsum("ij,ik->jk", weights * (data - em[:, :1]), em[:, 1:])
        a += (_RIDGE * (np.einsum("jkk->j", a) / 3.0 + 1.0))[:, None, None] * eye3
        states[1:] = np.linalg.solve(a, rhs[..., None])[..., 0].T
        # effect rows: unconstrained 4x4 normal equations
        b = np.einsum("ij,kj,lj->ikl", weights, states, states)
        rhs = np.einsum("ij,kj->ik", weights * data, states)
        b += (_RIDGE * (np.einsum("ikk->i", b) / 4.0 + 1.0))[:, None, None] * eye4
        effects[1:] = np.linalg.solve(b, rhs[..., None])[..., 0]

        new = _chi_squared(values, sigma, effects, states)
        assert new <= chi2 + 1e-9 * (1.0 + chi2), "chi-squared increased"
        improvement = chi2 - new
        chi2 = new
        if improvement < _IMPROVEMENT_TOL:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"primary fit did not converge in {_MAX_ITER} iterations", last_value=chi2
        )

    svals = np.linalg.svd(states, compute_uv=False)
    if svals[-1] < 1e-8 * svals[0]:
        warnings.warn(
            "fitted states span fewer than 4 GPT dimensions", RankDeficiencyWarning,
            stacklevel=2,
        )
    return GptModel(
        point=freq.point, effects=effects, states=states,
        chi_squared=chi2, iterations=iterations,
    )


def gauge_fix(model: GptModel) -> GptModel:
    """Basis change putting effects as close to (1/2, axis/2) as possible.

    The transform has the block form [[1, 0], [b, M]], which preserves the
    unit effect and state normalization; the reconstructed table is exactly
    invariant.  After it, state coordinates read as (1, x, y, z).
    """
    em = model.effects[1:]
    reduced = em[:, 1:]
    svals = np.linalg.svd(reduced, compute_uv=False)
    if svals[-1] < 1e-10 * max(svals[0], 1.0):
        raise SingularTransformError("effects do not span the three trait dimensions")
    axes = np.array(
        [measurement_effect(m, model.point.theta, model.point.alpha).as_array()
         for m in MEAS_LABELS]
    )
    targets = np.column_stack([0.5 - em[:, 0], 0.5 * axes])
    sol, *_ = np.linalg.lstsq(reduced, targets, rcond=None)
    h = np.eye(4)
    h[1:, 0] = sol[:, 0]
    h[1:, 1:] = sol[:, 1:]
    if abs(np.linalg.det(sol[:, 1:])) < 1e-12:
        raise SingularTransformError("gauge transform is not invertible")
    return GptModel(
        point=model.point,
        effects=model.effects @ h,
        states=np.linalg.solve(h, model.states),
        chi_squared=model.chi_squared,
        iterations=model.iterations,
    )


def max_mixed_state(model: GptModel) -> tuple[np.ndarray, float]:
    """The GPT state m with u.m = 1 and e_i.m = 1/2 for all measurements.

    Solved by truncated-SVD least squares; directions the effects do not
    resolve are set to zero (minimum norm).  Raises only when the resolved
    part of the system is itself ill conditioned.  Returns (m, residual)
    with residual = max_i |e_i.m - 1/2|.
    """
    em = model.effects[1:]
    a = em[:, 1:]
    b = 0.5 - em[:, 0]
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > 1e-12 * s[0]
    s_kept = s[keep]
    if s_kept.size and s_kept[0] / s_kept[-1] > 1e8:
        raise IllConditionedError(
            f"half-probability system condition {s_kept[0] / s_kept[-1]:.3e} exceeds 1e8"
        )
    w = vt[keep].T @ ((u[:, keep].T @ b) / s_kept)
    m = np.concatenate([[1.0], w])
    residual = float(np.max(np.abs(a @ w - b)))
    return m, residual
