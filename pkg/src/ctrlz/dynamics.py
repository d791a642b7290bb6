"""Stateless step operators: deterministic denoising, clean estimates,
stochastic and deterministic inversion, and guidance combination.

Everything here is a pure function of its arguments; no operator draws
randomness or mutates shared state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule


class NonFiniteError(ArithmeticError):
    """A state or prediction picked up NaN or infinity."""


class GuidanceMode(enum.Enum):
    CFG = "cfg"
    CFG_PLUS_PLUS = "cfg++"


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance scale and how the combined prediction feeds the update.

    Under plain CFG the guided noise drives both the clean estimate and the
    re-noising term; under CFG++ the re-noising term reverts to the
    unconditional prediction (interpolation rather than extrapolation).
    """

    omega: float = 1.0
    mode: GuidanceMode = GuidanceMode.CFG

    def __post_init__(self):
        if not math.isfinite(self.omega):
            raise ValueError("guidance scale must be finite")
        if self.omega < 0.0:
            raise ValueError("guidance scale must be >= 0")


@dataclass(frozen=True, eq=False)
class LatentState:
    """A point on the sampling trajectory: vector ``x`` at noise level ``t``."""

    x: np.ndarray
    t: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("state vector must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"non-finite state at level {self.t}")
        if self.t < 0:
            raise ValueError("noise level must be >= 0")
        object.__setattr__(self, "x", x)

    @property
    def dim(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class Prediction:
    """One denoiser output: combined noise estimate plus the clean estimate.

    ``eps_uncond`` keeps the unconditional branch available so CFG++ callers
    can feed it to the re-noising term without a second forward pass.
    """

    eps: np.ndarray
    x0_hat: np.ndarray
    eps_uncond: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.eps_uncond is None:
            object.__setattr__(self, "eps_uncond", self.eps)


def _require_level(state: LatentState, sched: NoiseSchedule, minimum: int = 1) -> None:
    if state.t < minimum:
        raise ValueError(f"operation requires level >= {minimum}, got {state.t}")
    if state.t > sched.num_steps:
        raise ValueError(f"level {state.t} outside schedule with {sched.num_steps} steps")


def clean_estimate(x_t: LatentState, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Posterior-mean style estimate of the clean sample from a noisy state.

    Returns (x_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t). Rejects level 0, where
    the state already is the clean sample.
    """
    _require_level(x_t, sched)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x_t.x.shape:
        raise ValueError("eps dimension mismatch")
    ab = sched.alpha_bars[x_t.t]
    return (x_t.x - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)


def ddim_step(
    x_t: LatentState,
    eps_for_x0: np.ndarray,
    eps_for_noise: np.ndarray,
    sched: NoiseSchedule,
) -> tuple[LatentState, np.ndarray]:
    """Deterministic denoising update from level t to t-1.

    The clean estimate uses ``eps_for_x0`` and the re-noising term uses
    ``eps_for_noise``; plain CFG passes the same array twice, CFG++ passes
    the guided and unconditional predictions respectively. Returns the new
    state and the clean estimate it was built from.
    """
    _require_level(x_t, sched)
    eps_for_noise = np.asarray(eps_for_noise, dtype=np.float64)
    if eps_for_noise.shape != x_t.x.shape:
        raise ValueError("eps dimension mismatch")
    x0_hat = clean_estimate(x_t, eps_for_x0, sched)
    ab_prev = sched.alpha_bars[x_t.t - 1]
    x_prev = math.sqrt(ab_prev) * x0_hat + math.sqrt(1.0 - ab_prev) * eps_for_noise
    return LatentState(x_prev, x_t.t - 1), x0_hat


def stochastic_invert(
    x_t: LatentState, delta: int, noise: np.ndarray, sched: NoiseSchedule
) -> LatentState:
    """Re-noise a state ``delta`` levels up with fresh Gaussian noise.

    Returns sqrt(ab'/ab) * x + sqrt(1 - ab'/ab) * noise at level t + delta,
    which preserves the forward-process marginals exactly. ``delta == 0`` is
    the identity.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if x_t.t + delta > sched.num_steps:
        raise ValueError(f"target level {x_t.t + delta} exceeds schedule top {sched.num_steps}")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x_t.x.shape:
        raise ValueError("noise dimension mismatch")
    ratio = sched.alpha_bars[x_t.t + delta] / sched.alpha_bars[x_t.t]
    x_up = math.sqrt(ratio) * x_t.x + math.sqrt(1.0 - ratio) * noise
    return LatentState(x_up, x_t.t + delta)


def deterministic_invert(
    x_prev: LatentState, eps: np.ndarray, sched: NoiseSchedule
) -> LatentState:
    """Algebraic inverse of ``ddim_step`` under a shared noise prediction.

    Takes a state at level t-1 up to level t; composing with ``ddim_step``
    using the same ``eps`` recovers the input exactly (first-order inversion,
    with ``eps`` conventionally evaluated at the lower-level state).
    """
    t = x_prev.t + 1
    if t > sched.num_steps:
        raise ValueError(f"target level {t} exceeds schedule top {sched.num_steps}")
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x_prev.x.shape:
        raise ValueError("eps dimension mismatch")
    ab_t = sched.alpha_bars[t]
    ab_prev = sched.alpha_bars[t - 1]
    scale = math.sqrt(ab_t / ab_prev)
    coeff = math.sqrt(1.0 - ab_t) - scale * math.sqrt(1.0 - ab_prev)
    return LatentState(scale * x_prev.x + coeff * eps, t)


def guided_epsilon(eps_cond: np.ndarray, eps_uncond: np.ndarray, omega: float) -> np.ndarray:
    """Affine combination eps_uncond + omega * (eps_cond - eps_uncond)."""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("guidance branch dimension mismatch")
    return eps_uncond + omega * (eps_cond - eps_uncond)
