"""Stage-2 fit: secondary preparations that restore operational equivalence.

The fitted primary states generally break the coin-flip symmetry: the two
pair averages (psi + psi_bar)/2 and (phi + phi_bar)/2 no longer look alike
to the fitted measurements.  This stage replaces the four x-z primaries by
convex mixtures of all six primaries plus the fitted maximally mixed point
m, chosen to displace each state as little as possible while making both
pair averages agree exactly with m under every fitted effect.  Because m
itself is in the mixing basis, the constraint set is never empty.

Each pair is an independent 14-variable quadratic program (two weight
vectors over the 7-point basis) with 6 equality constraints and
nonnegativity.  A tiny proximal pull toward the identity weight pattern
makes the objective strictly convex, so the minimizer is unique even
where basis states coincide.  The QP is solved by a primal-dual interior
point iteration (predictor-corrector), which converges to that unique
minimizer without any combinatorial working-set moves and is therefore
immune to the cycling that degenerate vertices induce in active-set
methods.  The interior iterate only approaches the boundary, so a final
polish pins the near-zero weights and re-solves the remaining
equality-constrained least-squares problem on that face exactly: pinned
weights come out exactly zero and the equalities hold to machine
precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MEAS_LABELS, PREP_LABELS, MeasLabel, PrepLabel
from .errors import ConvergenceError, InfeasibleError
from .tomo import GptModel, max_mixed_state

_PROX = 1e-8
_QP_CAP = 100_000
_RESIDUAL_TOL = 1e-9

# basis column order: the six primaries then m
_PAIRS = ((0, 1), (2, 3))


@dataclass(frozen=True)
class SecondarySolution:
    """Secondary states for (psi, psi_bar, phi, phi_bar) and their mixtures.

    ``weight_matrix`` row j gives the convex weights of secondary j over
    the 7-point basis (6 primaries + m); ``objective`` is the summed
    squared displacement from the primaries; ``equivalence_residual`` is
    the worst constraint violation the solver left behind.
    """

    secondary_states: np.ndarray = field(repr=False)
    weight_matrix: np.ndarray = field(repr=False)
    objective: float = 0.0
    equivalence_residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        if self.secondary_states.shape != (4, 4) or self.weight_matrix.shape != (4, 7):
            raise ValueError("expected (4, 4) states and (4, 7) weights")
        if self.weight_matrix.min() < -1e-10:
            raise ValueError(f"negative mixture weight {self.weight_matrix.min():.3e}")
        sums = self.weight_matrix.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-10:
            raise ValueError("mixture weights must sum to 1 per secondary")


@dataclass(frozen=True)
class EquivalenceReport:
    """Worst-case deviation of the pair averages from the half point."""

    deviations: np.ndarray = field(repr=False)
    max_deviation: float = 0.0
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def mixture_probability(
    model: GptModel, pair: tuple[PrepLabel, PrepLabel], effect: MeasLabel
) -> float:
    """Probability of ``effect`` on the even mixture of two primaries."""
    ia, ib = (PREP_LABELS.index(PrepLabel(p)) for p in pair)
    e = model.effects[1 + MEAS_LABELS.index(MeasLabel(effect))]
    return float(0.5 * (e @ model.states[:, ia] + e @ model.states[:, ib]))


def _solve_pair(h_mat, g_vec, a_mat, b_vec, c_mat, e_vec):
    """One pair's weight QP: interior point plus an exact finishing solve.

    The interior iterate resolves every direction the data constrain, but
    along proximally flat directions (weight reshuffles that leave the
    secondary state untouched) its precision is limited to roughly
    sqrt(gap / prox).  The combinatorial pattern is therefore finished
    exactly: weights the iterate drove to the boundary are pinned, the
    least-squares problem on that face is solved exactly, and weights the
    face solve pushes negative are pinned for another round with the
    interior point rerun on the smaller face.  If a face stops being
    solvable, or the interior point stalls on it, the last interior
    iterate is returned; it is feasible to working precision and optimal
    up to the flat-direction blur.  Returns (z, iterations).
    """
    n = a_mat.shape[1]
    # the optimum over the equality manifold alone often respects the bounds
    # already (noise-free data); accept it after an exact face finish so the
    # boundary coordinates become exact zeros.  At this violation scale a
    # coordinate can only be misclassified along a prox-flat reshuffle, which
    # leaves the secondary states unchanged.
    z = _face_optimum(np.zeros(n, dtype=bool), a_mat, b_vec, c_mat, e_vec)
    if float(z.min()) >= -1e-8 * max(1.0, float(z.max())):
        trial = z < 1e-7 * max(1.0, float(z.max()))
        z = _face_optimum(trial, a_mat, b_vec, c_mat, e_vec)
        if (np.max(np.abs(a_mat @ z - b_vec)) <= 1e-10
                and float(z.min()) >= -1e-12):
            return z, 2
    pinned = np.zeros(n, dtype=bool)
    z_ipm = None
    total = 1
    for _ in range(n + 1):
        free = np.flatnonzero(~pinned)
        try:
            z_free, steps = _interior_point(
                h_mat[np.ix_(free, free)],
                2.0 * g_vec[free],
                a_mat[:, free],
                b_vec,
                _QP_CAP - total,
            )
        except ConvergenceError:
            if z_ipm is not None:
                return z_ipm, total  # keep the last feasible interior iterate
            raise
        total += steps
        z_ipm = np.zeros(n)
        z_ipm[free] = z_free
        trial = pinned | (z_ipm < 1e-7 * max(1.0, float(z_ipm.max())))
        z = _face_optimum(trial, a_mat, b_vec, c_mat, e_vec)
        total += 1
        if np.max(np.abs(a_mat @ z - b_vec)) > 1e-10:
            return z_ipm, total  # pinning went too far; the face lost the equalities
        negative = ~trial & (z < -1e-12)
        if not negative.any():
            return z, total
        pinned = trial | negative
    raise ConvergenceError(
        "secondary face refinement failed to settle",
        last_value=float(np.sum((c_mat @ z_ipm - e_vec) ** 2)),
    )


def _face_optimum(pinned, a_mat, b_vec, c_mat, e_vec):
    """Minimize |c_mat z - e_vec| subject to a_mat z = b_vec, z[pinned] = 0.

    Null-space method: a thin SVD of the free columns of a_mat gives the
    minimum-norm particular solution and an orthonormal basis of the
    face, then one least-squares solve places the optimum on it.  Pinned
    coordinates come out exactly zero by construction.
    """
    free = np.flatnonzero(~pinned)
    if free.size == 0:
        return np.zeros(a_mat.shape[1])
    a_f = a_mat[:, free]
    u_svd, s_svd, vt_svd = np.linalg.svd(a_f, full_matrices=True)
    rank = int(np.sum(s_svd > 1e-10 * s_svd[0]))
    z_f = vt_svd[:rank].T @ ((u_svd[:, :rank].T @ b_vec) / s_svd[:rank])
    null_f = vt_svd[rank:].T
    if null_f.shape[1]:
        c_f = c_mat[:, free]
        y, *_ = np.linalg.lstsq(c_f @ null_f, e_vec - c_f @ z_f, rcond=None)
        z_f = z_f + null_f @ y
    z = np.zeros(a_mat.shape[1])
    z[free] = z_f
    return z


def _interior_point(h_mat, h_lin, a_mat, b_vec, cap):
    """Minimize (1/2) z'Hz - h'z subject to a_mat z = b_vec, z >= 0.

    Infeasible-start predictor-corrector iteration.  H must be positive
    definite, which makes the minimizer unique; degeneracy of the
    constraints only blurs the dual variables, never the returned point.
    The equality block is regularized by a tiny negative diagonal since
    the constraint rows may be rank deficient.  Returns (z, steps).
    """
    n = h_mat.shape[1]
    n_eq = a_mat.shape[0]
    z = np.ones(n)
    mu = np.ones(n)
    nu = np.zeros(n_eq)
    kkt = np.zeros((n + n_eq, n + n_eq))
    kkt[:n, n:] = a_mat.T
    kkt[n:, :n] = a_mat
    kkt[n:, n:] = -1e-12 * np.eye(n_eq)
    scale = 1.0 + max(np.max(np.abs(h_lin)), np.max(np.abs(b_vec)))
    best_gap = np.inf
    best_feasible = np.inf
    stall = 0
    for step in range(1, cap + 1):
        r_dual = h_mat @ z - h_lin + a_mat.T @ nu - mu
        r_primal = a_mat @ z - b_vec
        gap = float(z @ mu) / n
        feasible = max(np.max(np.abs(r_dual)), np.max(np.abs(r_primal)))
        if feasible < 1e-11 * scale and gap < 1e-13 * scale:
            return z, step
        if gap < 0.9 * best_gap or feasible < 0.9 * best_feasible:
            stall = 0
        else:
            stall += 1
            if stall >= 5 and feasible < 1e-9 * scale:
                # conditioning floor: near-degenerate bases leave a dual
                # residual around 1e-10 that no further step removes.  The
                # iterate is exact enough to identify the active pattern;
                # the face finish restores the equalities to 1e-12.
                return z, step
            if stall >= 25:
                raise ConvergenceError(
                    "interior point stalled before reaching feasibility",
                    last_value=feasible,
                )
        best_gap = min(best_gap, gap)
        best_feasible = min(best_feasible, feasible)
        z_floor = np.maximum(z, 1e-30)  # boundary weights shrink geometrically
        ratio = mu / z_floor
        kkt[:n, :n] = h_mat
        kkt[:n, :n][np.diag_indices(n)] += ratio
        # affine-scaling predictor
        try:
            dz = np.linalg.solve(kkt, np.concatenate([-r_dual - mu, -r_primal]))[:n]
        except np.linalg.LinAlgError:
            return z, step
        dmu = -mu - ratio * dz
        alpha_p = _boundary_fraction(z, dz, 1.0)
        alpha_d = _boundary_fraction(mu, dmu, 1.0)
        gap_aff = float((z + alpha_p * dz) @ (mu + alpha_d * dmu)) / n
        sigma = (gap_aff / gap) ** 3 if gap > 0 else 0.0
        # corrector recenters toward sigma * gap
        r_comp = z * mu + dz * dmu - sigma * gap
        dz, dnu = np.split(
            np.linalg.solve(kkt, np.concatenate([-r_dual - r_comp / z_floor, -r_primal])), [n]
        )
        dmu = -r_comp / z_floor - ratio * dz
        tau = max(0.995, 1.0 - max(gap, 1e-6))
        alpha_p = _boundary_fraction(z, dz, tau)
        alpha_d = _boundary_fraction(mu, dmu, tau)
        z = z + alpha_p * dz
        nu = nu + alpha_d * dnu
        mu = mu + alpha_d * dmu
    raise ConvergenceError(
        "secondary solve exceeded the iteration cap",
        last_value=float(0.5 * z @ (h_mat @ z) - h_lin @ z),
    )


def _boundary_fraction(values, deltas, tau):
    """Largest step in [0, tau] keeping values + step * deltas positive."""
    shrinking = deltas < 0.0
    if not np.any(shrinking):
        return tau
    return float(min(tau, tau * np.min(-values[shrinking] / deltas[shrinking])))


def _lu_factor(mat):
    """Cache an LU factorization as (inverse-applied) closure state."""
    return np.linalg.inv(mat)


def _lu_solve(inv_mat, rhs):
    return inv_mat @ rhs


def solve_secondary(model: GptModel) -> SecondarySolution:
    """Minimally displaced secondaries satisfying operational equivalence.

    Solves one QP per antipodal pair.  The all-m weight vector is always
    feasible, so failure can only be numerical; a residual above 1e-9 is
    reported as infeasibility rather than returned silently.
    """
    m, _ = max_mixed_state(model)
    basis = np.column_stack([model.states, m])
    coords = basis[1:]
    effect_values = model.effects[1:] @ basis  # (4, 7)
    target = effect_values[:, 6]

    a = np.zeros((6, 14))
    a[0, :7] = 1.0
    a[1, 7:] = 1.0
    a[2:, :7] = 0.5 * effect_values
    a[2:, 7:] = 0.5 * effect_values
    b = np.concatenate([[1.0, 1.0], target])

    # shared objective pieces: (1/2) z'Hz - h'z up to a constant equals
    # |V w_a - v_a|^2 + |V w_b - v_b|^2 plus the proximal pull
    gram = coords.T @ coords + _PROX * np.eye(7)
    h_mat = np.zeros((14, 14))
    h_mat[:7, :7] = h_mat[7:, 7:] = 2.0 * gram
    c_mat = np.zeros((14, 14))
    c_mat[:7, :7] = c_mat[7:, 7:] = np.linalg.cholesky(gram).T

    weights = np.zeros((4, 7))
    iterations = 0
    for ja, jb in _PAIRS:
        own = np.zeros(14)
        own[ja], own[7 + jb] = 1.0, 1.0
        g = np.concatenate(
            [coords.T @ coords[:, ja], coords.T @ coords[:, jb]]
        ) + _PROX * own
        e_vec = np.linalg.solve(c_mat.T, g)
        z, its = _solve_pair(h_mat, g, a, b, c_mat, e_vec)
        iterations += its
        z[(z < 0.0) & (z > -1e-10)] = 0.0
        weights[ja], weights[jb] = z[:7], z[7:]

    secondary = basis @ weights.T  # (4, 4) columns psi, psi_bar, phi, phi_bar
    displacement = secondary[1:] - model.states[1:, :4]
    objective = float(np.sum(displacement * displacement))
    residual = 0.0
    for ja, jb in _PAIRS:
        pair_values = effect_values @ (weights[ja] + weights[jb]) / 2.0
        residual = max(residual, float(np.max(np.abs(pair_values - target))))
    if residual > _RESIDUAL_TOL:
        raise InfeasibleError(
            f"pair-average constraints violated by {residual:.3e}", violation=residual
        )
    return SecondarySolution(
        secondary_states=secondary,
        weight_matrix=weights,
        objective=objective,
        equivalence_residual=residual,
        iterations=iterations,
    )


def verify_equivalence(
    sol: SecondarySolution, model: GptModel, tol: float = 1e-9
) -> EquivalenceReport:
    """Deviation of each secondary pair average from probability 1/2."""
    deviations = np.zeros((len(_PAIRS), 4))
    for row, (ja, jb) in enumerate(_PAIRS):
        avg = 0.5 * (sol.secondary_states[:, ja] + sol.secondary_states[:, jb])
        deviations[row] = np.abs(model.effects[1:] @ avg - 0.5)
    return EquivalenceReport(
        deviations=deviations, max_deviation=float(deviations.max()), tol=tol
    )


def average_mixture_weight(sol: SecondarySolution) -> float:
    """Mean weight each secondary assigns to its own primary."""
    return float(np.mean(np.diagonal(sol.weight_matrix[:, :4])))
