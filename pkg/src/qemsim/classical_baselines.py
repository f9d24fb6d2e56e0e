"""Conventional weak-phase measurement baselines.

Closed-form estimator variances and Monte-Carlo realizations for in-focus
phase contrast, dark field, diffraction-plane detection, and the
discretized / scanning variants, plus the two-pixel entangled-measurement
statistics and the background-phase signal-to-noise penalty.  These anchor
the quantum modules' claimed advantages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SCHEMES = (
    "in_focus_phase_contrast",
    "dark_field",
    "diffraction",
    "discrete_n_pixel",
    "scanning_pairwise",
)


@dataclass(frozen=True)
class MeasurementScheme:
    kind: str
    N: int
    n_pixels: int = 2

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.kind!r}")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.kind in ("discrete_n_pixel", "scanning_pairwise") and self.n_pixels < 2:
            raise ConfigError("discrete/scanning schemes need at least 2 pixels")


def variance_analytic(scheme: MeasurementScheme, alpha: float) -> float:
    """Closed-form phase-estimator variance of a scheme.

    The three continuous schemes share Var = 1/(4 N alpha); the discrete
    n-pixel estimator and its pairwise-scanning equivalent give
    (n - 1)/(4 N).
    """
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if scheme.kind in ("in_focus_phase_contrast", "dark_field", "diffraction"):
        return 1.0 / (4.0 * scheme.N * alpha)
    return (scheme.n_pixels - 1) / (4.0 * scheme.N)


# Fixed relative mode weights used to spread the diffraction-plane signal
# over several reciprocal bins; only their sum matters for the estimator.
_DIFFRACTION_WEIGHTS = np.array([0.55, 0.25, 0.12, 0.08])


def variance_monte_carlo(
    scheme: MeasurementScheme,
    theta_true: float,
    alpha: float,
    N: int,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """Empirical estimator variance over Monte-Carlo trials.

    in_focus: X ~ Bin(N, alpha (1 + 2 theta)), Y = (X/(N alpha) - 1)/2.
    dark_field: X ~ Bin(N, alpha theta^2), Y = sqrt(X/(N alpha)).
    diffraction: the dark-field probability redistributed over reciprocal
    bins (multinomial), estimated from the total scattered count.
    """
    if scheme.kind == "in_focus_phase_contrast":
        p = alpha * (1.0 + 2.0 * theta_true)
        x = rng.binomial(N, p, size=trials)
        est = 0.5 * (x / (N * alpha) - 1.0)
    elif scheme.kind == "dark_field":
        x = rng.binomial(N, alpha * theta_true**2, size=trials)
        est = np.sqrt(x / (N * alpha))
    elif scheme.kind == "diffraction":
        w = _DIFFRACTION_WEIGHTS / _DIFFRACTION_WEIGHTS.sum()
        p_bins = alpha * theta_true**2 * w
        probs = np.concatenate([p_bins, [1.0 - p_bins.sum()]])
        counts = rng.multinomial(N, probs, size=trials)
        est = np.sqrt(counts[:, :-1].sum(axis=1) / (N * alpha))
    else:
        raise ConfigError(f"no Monte-Carlo model for scheme {scheme.kind!r}")
    return float(np.var(est))


def estimator_samples(
    scheme: MeasurementScheme,
    theta_true: float,
    alpha: float,
    N: int,
    trials: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Raw estimator draws (for bias and sign tests)."""
    if scheme.kind == "in_focus_phase_contrast":
        x = rng.binomial(N, alpha * (1.0 + 2.0 * theta_true), size=trials)
        return 0.5 * (x / (N * alpha) - 1.0)
    if scheme.kind == "dark_field":
        x = rng.binomial(N, alpha * theta_true**2, size=trials)
        return np.sqrt(x / (N * alpha))
    raise ConfigError(f"no sample model for scheme {scheme.kind!r}")


def eeem_probabilities(k: int, delta: float) -> tuple[float, float]:
    """Up/down outcome probabilities (1 +- sin k delta)/2 after k passages."""
    s = math.sin(k * delta)
    return (1.0 + s) / 2.0, (1.0 - s) / 2.0


def eeem_variance_gain(k: int, N: int, delta: float) -> tuple[float, float]:
    """Per-group variances (1/k^2 entangled, 1/k separate) in the k delta << 1 regime.

    Aggregating N electrons into N/k entangled groups leaves the entangled
    total variance a factor k below the classical one.
    """
    if k < 1 or N < 1:
        raise ConfigError("k and N must be at least 1")
    if abs(k * delta) > 0.3:
        raise ConfigError("variance formulas require k delta << 1")
    return 1.0 / k**2, 1.0 / k


def background_phase_penalty(delta_bg: float, exact: bool = False) -> float:
    """SNR multiplier of a small variation on top of a background phase delta.

    Quadratic form 1 - 3 delta^2 / 2; the exact form is the contrast
    derivative over the Bernoulli noise, normalized to 1 at delta = 0.
    """
    if abs(delta_bg) >= 0.5:
        raise ConfigError("background phase must satisfy |delta| < 0.5")
    if not exact:
        return 1.0 - 1.5 * delta_bg**2
    d = delta_bg
    signal = (3 * math.cos(d) - 2) / (3 - 2 * math.cos(d)) ** 2
    noise = math.sqrt(0.25 - (math.sin(d) / (3 - 2 * math.cos(d))) ** 2)
    return (signal / noise) * 0.5
