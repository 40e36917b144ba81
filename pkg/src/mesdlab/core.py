"""Exact single-qubit geometry for the discrimination experiment.

States and binary-measurement effects live in the x-z plane of the Bloch
sphere (plus one +-y pair used to pin the third axis).  A scan point
(theta, alpha) fixes the whole configuration:

* the four discrimination states sit at polar angle +-(theta - alpha),
* the identifying measurements M_psi / M_phi sit at polar angles theta and
  pi - theta, i.e. tilted by alpha toward the x-axis from their states,
* the discriminator M_disc measures along -z and M_y along +y.

The scan parameters are confusability c = sin^2((alpha - 2*theta)/2),
measurement error epsilon = sin^2(alpha/2) and success probability
s = cos^2((theta - alpha)/2); this configuration saturates the quantum
bound at every admissible point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConstraintError

HALF_PI = math.pi / 2

# Tolerance for the weak inequalities on scan parameters; grid values are
# exact floats, so this only guards against rounding in derived angles.
_ANGLE_TOL = 1e-12


class PrepLabel(str, Enum):
    """The six primary preparations, in frequency-table column order."""

    PSI = "psi"
    PSI_BAR = "psi_bar"
    PHI = "phi"
    PHI_BAR = "phi_bar"
    Y = "y"
    Y_BAR = "y_bar"


class MeasLabel(str, Enum):
    """The four binary measurements, in frequency-table row order."""

    M_PSI = "m_psi"
    M_PHI = "m_phi"
    M_DISC = "m_disc"
    M_Y = "m_y"


PREP_LABELS = tuple(PrepLabel)
MEAS_LABELS = tuple(MeasLabel)

# Basis convention: |down> = (1, 0) maps to +z.
KET_DOWN = np.array([1.0, 0.0], dtype=complex)

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


@dataclass(frozen=True)
class BlochVector:
    """A real 3-vector; unit norm for pure states and effect axes."""

    rx: float
    ry: float
    rz: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])

    @classmethod
    def from_array(cls, arr) -> "BlochVector":
        rx, ry, rz = (float(x) for x in arr)
        return cls(rx, ry, rz)

    def norm(self) -> float:
        return math.sqrt(self.rx**2 + self.ry**2 + self.rz**2)

    def dot(self, other: "BlochVector") -> float:
        return self.rx * other.rx + self.ry * other.ry + self.rz * other.rz


@dataclass(frozen=True)
class Rotation:
    """A rotation pulse by angle ``beta`` about the axis (cos g, sin g, 0)."""

    beta: float
    gamma: float

    @property
    def matrix(self) -> np.ndarray:
        """The 2x2 unitary exp(-i beta/2 (cos g, sin g, 0).sigma)."""
        half = self.beta / 2
        c, s = math.cos(half), math.sin(half)
        return np.array(
            [
                [c, -1j * np.exp(-1j * self.gamma) * s],
                [-1j * np.exp(1j * self.gamma) * s, c],
            ]
        )


def rotation_matrix(beta: float, gamma: float) -> Rotation:
    """Rotation pulse with angle beta and phase gamma."""
    return Rotation(beta, gamma)


def bloch_from_amplitudes(amplitudes: np.ndarray) -> BlochVector:
    """Bloch vector of a pure state given (a0, a1) amplitudes.

    Convention: rx = 2 Re(a0* a1), ry = 2 Im(a0* a1), rz = |a0|^2 - |a1|^2,
    so |down> = (1, 0) sits at +z.
    """
    a0, a1 = amplitudes
    cross = np.conj(a0) * a1
    return BlochVector(
        2.0 * float(np.real(cross)),
        2.0 * float(np.imag(cross)),
        float(abs(a0) ** 2 - abs(a1) ** 2),
    )


def prep_pulse(label: PrepLabel, state_angle: float) -> Rotation:
    """Preparation pulse applied to |down> for one primary state.

    ``state_angle`` is the polar angle of psi (theta - alpha at a scan
    point); the y-pair pulses do not depend on it.
    """
    t = state_angle
    pulses = {
        PrepLabel.PSI: (t, HALF_PI),
        PrepLabel.PSI_BAR: (math.pi + t, HALF_PI),
        PrepLabel.PHI: (math.pi - t, HALF_PI),
        PrepLabel.PHI_BAR: (t, 3 * HALF_PI),
        PrepLabel.Y: (HALF_PI, math.pi),
        PrepLabel.Y_BAR: (HALF_PI, 0.0),
    }
    return Rotation(*pulses[PrepLabel(label)])


def meas_pulse(label: MeasLabel, theta: float) -> Rotation:
    """Un-rotation pulse mapping a measurement axis onto +z.

    Outcome 1 is the +z projection after the pulse; the resulting effect
    axes are theta (M_psi), pi - theta (M_phi), pi (M_disc) and +y (M_y).
    """
    pulses = {
        MeasLabel.M_PSI: (theta, 3 * HALF_PI),
        MeasLabel.M_PHI: (math.pi - theta, 3 * HALF_PI),
        MeasLabel.M_DISC: (math.pi, 3 * HALF_PI),
        MeasLabel.M_Y: (HALF_PI, 0.0),
    }
    return Rotation(*pulses[MeasLabel(label)])


def state_from_pulse(pulse: Rotation) -> BlochVector:
    """Bloch vector of pulse |down>."""
    return bloch_from_amplitudes(pulse.matrix @ KET_DOWN)


def effect_axis_from_pulse(pulse: Rotation) -> BlochVector:
    """Outcome-1 effect axis of "apply pulse, then project onto +z".

    In the Heisenberg picture the axis components are a_k = tr(sigma_k
    U+ sigma_z U) / 2.
    """
    u = pulse.matrix
    heis = u.conj().T @ _PAULI[2] @ u
    return BlochVector(
        *(float(np.real(np.trace(p @ heis))) / 2.0 for p in _PAULI)
    )


def prepare_state(label: PrepLabel, state_angle: float) -> BlochVector:
    """Bloch vector of one primary preparation.

    ``state_angle`` in [0, pi/2] is the polar angle of psi; psi_bar and
    phi_bar are the antipodes of psi and phi, and the y-pair is +-y.
    """
    if not -_ANGLE_TOL <= state_angle <= HALF_PI + _ANGLE_TOL:
        raise ConstraintError(
            f"state angle {state_angle!r} outside [0, pi/2]"
        )
    t = state_angle
    vectors = {
        PrepLabel.PSI: (math.sin(t), 0.0, math.cos(t)),
        PrepLabel.PSI_BAR: (-math.sin(t), 0.0, -math.cos(t)),
        PrepLabel.PHI: (math.sin(t), 0.0, -math.cos(t)),
        PrepLabel.PHI_BAR: (-math.sin(t), 0.0, math.cos(t)),
        PrepLabel.Y: (0.0, 1.0, 0.0),
        PrepLabel.Y_BAR: (0.0, -1.0, 0.0),
    }
    return BlochVector(*vectors[PrepLabel(label)])


def measurement_effect(label: MeasLabel, theta: float, alpha: float) -> BlochVector:
    """Outcome-1 effect axis of one measurement at scan point (theta, alpha).

    M_psi sits at polar angle theta and M_phi at pi - theta: each is tilted
    by alpha toward the x-axis from its companion state at theta - alpha.
    M_disc is the -z discriminator effect and M_y the +y effect.
    """
    _validate_angles(theta, alpha)
    axes = {
        MeasLabel.M_PSI: (math.sin(theta), 0.0, math.cos(theta)),
        MeasLabel.M_PHI: (math.sin(theta), 0.0, -math.cos(theta)),
        MeasLabel.M_DISC: (0.0, 0.0, -1.0),
        MeasLabel.M_Y: (0.0, 1.0, 0.0),
    }
    return BlochVector(*axes[MeasLabel(label)])


def born_probability(state: BlochVector, effect_axis: BlochVector) -> float:
    """Outcome-1 probability p = (1 + state . axis) / 2.

    The state may be subnormalized (norm <= 1, e.g. after depolarizing);
    the effect axis must be unit within 1e-9.
    """
    if abs(effect_axis.norm() - 1.0) > 1e-9:
        raise ValueError(f"effect axis norm {effect_axis.norm()!r} is not 1")
    if state.norm() > 1.0 + 1e-9:
        raise ValueError(f"state norm {state.norm()!r} exceeds 1")
    p = 0.5 * (1.0 + state.dot(effect_axis))
    return min(1.0, max(0.0, p))


def _validate_angles(theta: float, alpha: float) -> None:
    if not -_ANGLE_TOL <= theta <= HALF_PI + _ANGLE_TOL:
        raise ConstraintError(f"theta {theta!r} outside [0, pi/2]")
    if not -_ANGLE_TOL <= alpha <= HALF_PI + _ANGLE_TOL:
        raise ConstraintError(f"alpha {alpha!r} outside [0, pi/2]")


@dataclass(frozen=True)
class GridPoint:
    """A scan point (theta, alpha), both in [0, pi/2], with
    sin^2(alpha/2) <= sin^2((alpha - 2*theta)/2)."""

    theta: float
    alpha: float

    def __post_init__(self):
        _validate_angles(self.theta, self.alpha)
        lhs = math.sin(self.alpha / 2) ** 2
        rhs = math.sin((self.alpha - 2 * self.theta) / 2) ** 2
        if lhs > rhs + _ANGLE_TOL:
            raise ConstraintError(
                "scan constraint sin^2(alpha/2) <= sin^2((alpha - 2*theta)/2) "
                f"violated at theta={self.theta!r}, alpha={self.alpha!r}"
            )

    @property
    def state_angle(self) -> float:
        """Polar angle theta - alpha of the prepared psi state."""
        return self.theta - self.alpha


def theory_params(point: GridPoint) -> tuple[float, float, float]:
    """Ideal (c, epsilon, s) at a scan point.

    c = sin^2((alpha - 2*theta)/2), epsilon = sin^2(alpha/2),
    s = cos^2((theta - alpha)/2).
    """
    c = math.sin((point.alpha - 2 * point.theta) / 2) ** 2
    eps = math.sin(point.alpha / 2) ** 2
    s = math.cos((point.theta - point.alpha) / 2) ** 2
    return c, eps, s


def _validate_c_eps(c: float, eps: float, tol: float) -> None:
    if not -tol <= eps <= c + tol or not c <= 1.0 - eps + tol:
        raise ConstraintError(
            f"(c, epsilon) = ({c!r}, {eps!r}) outside epsilon <= c <= 1 - epsilon"
        )


def noncontextual_bound(c: float, eps: float, tol: float = 1e-9) -> float:
    """Upper bound on s for any noncontextual model: 1 - (c - eps)/2."""
    _validate_c_eps(c, eps, tol)
    return 1.0 - (c - eps) / 2.0


def quantum_bound(c: float, eps: float, tol: float = 1e-9) -> float:
    """Maximum quantum success probability at confusability c, error eps.

    (1 + sqrt(1 - eps + 2 sqrt(eps (1-eps) c (1-c)) + c (2 eps - 1))) / 2;
    at eps = 0 this reduces to the Helstrom value (1 + sqrt(1 - c)) / 2.
    """
    _validate_c_eps(c, eps, tol)
    radicand = 1.0 - eps + 2.0 * math.sqrt(max(eps * (1 - eps) * c * (1 - c), 0.0))
    radicand += c * (2.0 * eps - 1.0)
    return 0.5 * (1.0 + math.sqrt(max(radicand, 0.0)))


def default_grid() -> list[GridPoint]:
    """The 136-point scan: theta, alpha in {0.0, 0.1, ..., 1.5}, theta >= alpha."""
    points = []
    for i in range(16):
        for j in range(i + 1):
            points.append(GridPoint(theta=i / 10, alpha=j / 10))
    return points


def ideal_probability_table(point: GridPoint) -> np.ndarray:
    """Noise-free outcome-1 probability table, shape (5, 6).

    Row 0 is the unit effect (all ones); rows 1-4 follow MEAS_LABELS and
    columns follow PREP_LABELS.
    """
    table = np.ones((5, 6))
    t = point.state_angle
    states = [prepare_state(p, t) for p in PREP_LABELS]
    for i, m in enumerate(MEAS_LABELS):
        axis = measurement_effect(m, point.theta, point.alpha)
        for j, state in enumerate(states):
            table[i + 1, j] = born_probability(state, axis)
    return table
