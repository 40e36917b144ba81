"""Synthetic data generation for the prepare-measure experiment.

Each (measurement, preparation) cell of a scan point is simulated through
the physical pipeline: jittered preparation pulse, depolarizing
contraction, jittered measurement pulse, detector confusion, finite-shot
binomial sampling.  Every cell draws from its own counter-based RNG stream
so results are bit-identical regardless of evaluation order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import Sequence

import numpy as np

from .core import (
    MEAS_LABELS,
    PREP_LABELS,
    BlochVector,
    GridPoint,
    Rotation,
    born_probability,
    effect_axis_from_pulse,
    meas_pulse,
    prep_pulse,
    state_from_pulse,
)
from .errors import ConfigError

_MAX_SEED = 2**64


@dataclass(frozen=True)
class NoiseConfig:
    """Noise and sampling settings for one simulated run.

    ``shots = 0`` selects exact-frequency mode: no sampling, cells store
    the observed probability itself (marked by ``n_total = 0``).
    """

    shots: int = 1000
    e_bright_given_dark: float = 0.0171
    e_dark_given_bright: float = 0.0208
    rotation_angle_sigma: float = 0.0
    depolarizing_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.shots, (int, np.integer)) or self.shots < 0:
            raise ConfigError(f"shots must be a non-negative integer, got {self.shots!r}")
        for name in ("e_bright_given_dark", "e_dark_given_bright"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {v!r}")
        if self.e_bright_given_dark + self.e_dark_given_bright >= 1.0:
            raise ConfigError(
                "detection errors must satisfy e01 + e10 < 1, got "
                f"{self.e_bright_given_dark!r} + {self.e_dark_given_bright!r}"
            )
        if self.rotation_angle_sigma < 0.0:
            raise ConfigError(f"rotation_angle_sigma must be >= 0, got {self.rotation_angle_sigma!r}")
        if not 0.0 <= self.depolarizing_p <= 1.0:
            raise ConfigError(f"depolarizing_p must be in [0, 1], got {self.depolarizing_p!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < _MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


@dataclass(frozen=True)
class CountTable:
    """Raw outcome-1 counts for the 4x6 cells of one scan point.

    ``n_outcome1`` holds integer counts in finite-shot mode and exact
    observed probabilities in exact mode, where ``n_total`` is 0.
    """

    point: GridPoint
    config: NoiseConfig
    n_outcome1: np.ndarray = field(repr=False)
    n_total: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_outcome1.shape != (4, 6) or self.n_total.shape != (4, 6):
            raise ConfigError("count arrays must have shape (4, 6)")
        finite = self.n_total > 0
        if np.any(self.n_outcome1 < 0):
            raise ConfigError("negative counts")
        if np.any(self.n_outcome1[finite] > self.n_total[finite]):
            raise ConfigError("n_outcome1 exceeds n_total")
        if np.any(self.n_outcome1[~finite] > 1.0):
            raise ConfigError("exact-mode frequencies must lie in [0, 1]")

    def frequencies(self) -> np.ndarray:
        """Observed outcome-1 frequencies, shape (4, 6)."""
        out = np.array(self.n_outcome1, dtype=float)
        finite = self.n_total > 0
        out[finite] = out[finite] / self.n_total[finite]
        return out


def apply_depolarizing(state: BlochVector, p: float) -> BlochVector:
    """Contract a Bloch vector by 1 - p toward the maximally mixed state."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"depolarizing p must be in [0, 1], got {p!r}")
    k = 1.0 - p
    return BlochVector(k * state.rx, k * state.ry, k * state.rz)


def apply_rotation_noise(beta: float, sigma: float, rng: np.random.Generator) -> float:
    """Relative Gaussian jitter on a pulse angle: beta * (1 + g), g ~ N(0, sigma).

    Always consumes one draw so a cell's stream layout does not depend on
    the noise settings.
    """
    g = rng.standard_normal()
    return beta * (1.0 + sigma * g)


def confuse_probability(p_true: float, e01: float, e10: float) -> float:
    """Forward detector model: p_obs = p_true (1 - e10) + (1 - p_true) e01."""
    return p_true * (1.0 - e10) + (1.0 - p_true) * e01


def calibrate_detection(p_obs: float, e01: float, e10: float) -> float:
    """Invert the detector confusion matrix on a frequency, clamped to [0, 1]."""
    p = (p_obs - e01) / (1.0 - e01 - e10)
    return min(1.0, max(0.0, p))


def sample_counts(p_obs: float, shots: int, rng: np.random.Generator) -> tuple[int, int]:
    """Draw outcome-1 counts out of ``shots`` Bernoulli trials."""
    return int(rng.binomial(shots, p_obs)), shots


def cell_rng(seed: int, point_index: int, meas_index: int, prep_index: int) -> np.random.Generator:
    """Independent RNG stream for one (point, measurement, preparation) cell."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(point_index, meas_index, prep_index))
    return np.random.default_rng(ss)


def simulate_point(point: GridPoint, cfg: NoiseConfig, point_index: int = 0) -> CountTable:
    """Simulate all 24 cells of one scan point."""
    n1 = np.zeros((4, 6))
    n_total = np.zeros((4, 6), dtype=np.int64)
    t = point.state_angle
    for mi, mlabel in enumerate(MEAS_LABELS):
        meas = meas_pulse(mlabel, point.theta)
        for pi, plabel in enumerate(PREP_LABELS):
            rng = cell_rng(cfg.seed, point_index, mi, pi)
            prep = prep_pulse(plabel, t)
            state = state_from_pulse(
                Rotation(apply_rotation_noise(prep.beta, cfg.rotation_angle_sigma, rng), prep.gamma)
            )
            state = apply_depolarizing(state, cfg.depolarizing_p)
            axis = effect_axis_from_pulse(
                Rotation(apply_rotation_noise(meas.beta, cfg.rotation_angle_sigma, rng), meas.gamma)
            )
            p_obs = confuse_probability(
                born_probability(state, axis),
                cfg.e_bright_given_dark,
                cfg.e_dark_given_bright,
            )
            if cfg.shots == 0:
                n1[mi, pi] = p_obs
            else:
                n1[mi, pi], n_total[mi, pi] = sample_counts(p_obs, cfg.shots, rng)
    return CountTable(point=point, config=cfg, n_outcome1=n1, n_total=n_total)


def run_experiment(
    points: Sequence[GridPoint], cfg: NoiseConfig, workers: int = 1
) -> list[CountTable]:
    """Simulate every scan point; deterministic for any worker count."""
    if workers <= 1:
        return [simulate_point(p, cfg, i) for i, p in enumerate(points)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(simulate_point, points, repeat(cfg), range(len(points))))
