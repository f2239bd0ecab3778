"""Log-distance path loss with exponentially correlated shadowing.

Received power from base station s at sample n is

    p_s(n) = intercept - slope * log10(d_s(n)) + u_s(n)   [dB]

where u_s is zero-mean Gaussian shadowing whose autocorrelation decays
exponentially with traveled distance. Sampled at a constant spatial step
the shadowing is an AR(1) sequence with coefficient a = exp(-step/d_coh),
initialized from its stationary distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError


@dataclass(frozen=True)
class ChannelParams:
    """Propagation parameters for one base station link.

    slope_db is per decade of distance; coherence_m is the distance at
    which the shadowing correlation falls to 1/e.
    """

    intercept_db: float = 0.0
    slope_db: float = 35.0
    shadow_sigma_db: float = 6.0
    coherence_m: float = 20.0

    def __post_init__(self):
        for name in ("intercept_db", "slope_db", "shadow_sigma_db", "coherence_m"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.shadow_sigma_db < 0.0:
            raise ConfigurationError("shadow_sigma_db must be nonnegative")
        if self.coherence_m <= 0.0:
            raise ConfigurationError("coherence_m must be positive")

    def ar_coeff(self, step_m: float) -> float:
        if step_m <= 0.0:
            raise ConfigurationError("step_m must be positive")
        return math.exp(-step_m / self.coherence_m)


def path_loss(params: ChannelParams, distance_m) -> np.ndarray | float:
    """Mean received power (dB) at the given distance(s)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0.0):
        raise ConfigurationError("distances must be positive")
    out = params.intercept_db - params.slope_db * np.log10(d)
    return float(out) if out.ndim == 0 else out


def shadow_autocorr(params: ChannelParams, lags, step_m: float) -> np.ndarray:
    """Shadowing autocovariance at integer sample lags."""
    a = params.ar_coeff(step_m)
    lags = np.abs(np.asarray(lags, dtype=float))
    return params.shadow_sigma_db**2 * a**lags


def sample_shadowing(
    params: ChannelParams,
    n_samples: int,
    step_m: float,
    rng: np.random.Generator,
    n_trials: Optional[int] = None,
) -> np.ndarray:
    """Stationary AR(1) shadowing, shape [n_samples] or [n_trials, n_samples]."""
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    shape = (n_samples,) if n_trials is None else (int(n_trials), n_samples)
    sigma = params.shadow_sigma_db
    if sigma == 0.0:
        return np.zeros(shape)
    a = params.ar_coeff(step_m)
    w = rng.standard_normal(shape)
    # Driving sequence: stationary draw at n=0, scaled innovations after.
    x = w * (sigma * math.sqrt(1.0 - a * a))
    x[..., 0] = w[..., 0] * sigma
    return lfilter([1.0], [1.0, -a], x, axis=-1)


@dataclass(frozen=True)
class PowerTrace:
    """Simulated received powers for every base station along a trace.

    powers_db has shape [S, N] for a single trial or [T, S, N] for a batch.
    """

    powers_db: np.ndarray
    distances_m: np.ndarray  # [S, N]
    step_m: float
    channels: Tuple[ChannelParams, ...]

    @property
    def n_samples(self) -> int:
        return self.powers_db.shape[-1]


def sample_power(
    channels: Sequence[ChannelParams],
    distances_m: np.ndarray,
    step_m: float,
    rng: np.random.Generator,
    n_trials: Optional[int] = None,
) -> PowerTrace:
    """Draw received-power traces; shadowing is independent across links."""
    d = np.asarray(distances_m, dtype=float)
    if d.ndim != 2 or d.shape[0] != len(channels):
        raise ConfigurationError("distances_m must be [n_bs, n_samples] matching channels")
    n = d.shape[1]
    mean = np.stack([path_loss(ch, d[s]) for s, ch in enumerate(channels)])
    shadow = np.stack(
        [sample_shadowing(ch, n, step_m, rng, n_trials) for ch in channels],
        axis=0 if n_trials is None else 1,
    )
    return PowerTrace(mean + shadow, d, step_m, tuple(channels))
