"""Analytic inelastic-scattering-neutralization quantities.

The central object is the angular intensity profile of a dipole-region
inelastic event, Phi(beta) = 1/(beta^2 + theta_E^2) inside the kinematic
cutoff disc |beta| < theta_c.  The far field splits into two interleaved
stripe sets along beta_x with period lambda/sigma: the set S of stripes
centered on integer multiples of the period (the half that feeds the
symmetric detection channel) and its complement A.  The ratio of the
Phi-weight landing in A to that landing in S sets mu, the rms per-event
disturbance of the phase-accumulating qubit, from which the optimal
repetition numbers and all phase-noise spectra follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import NumericError
from .physics import BeamModel, DoseModel, bethe_ridge_angle, dose_budget_nsq, theta_E


@dataclass(frozen=True)
class StripeGeometry:
    """Stripe partition of the far-field plane at a given working resolution.

    beta_period is lambda/sigma.  Points whose fractional position
    frac(beta_x / beta_period) falls in (1/4, 3/4) belong to the set A;
    the complement S contains the stripe through the origin.
    """

    beta_period: float
    cutoff: float
    theta_E: float

    def __post_init__(self):
        if self.beta_period <= 0 or self.cutoff <= 0:
            raise ValueError("beta_period and cutoff must be positive")

    def in_set_a(self, beta_x):
        frac = np.mod(np.asarray(beta_x) / self.beta_period, 1.0)
        return (frac > 0.25) & (frac < 0.75)

    def a_intervals(self) -> list[tuple[float, float]]:
        """A-set intervals [(n+1/4)p, (n+3/4)p] clipped to [-cutoff, cutoff]."""
        p, c = self.beta_period, self.cutoff
        n_lo = math.floor(-c / p - 0.75)
        n_hi = math.ceil(c / p)
        out = []
        for n in range(n_lo, n_hi + 1):
            a = max((n + 0.25) * p, -c)
            b = min((n + 0.75) * p, c)
            if a < b:
                out.append((a, b))
        return out


@dataclass(frozen=True)
class RepetitionPlan:
    """Repetition numbers and dose caps for one (resolution, thickness) point."""

    k1: float
    k2: float
    k_opt: float
    k1_tilde: float
    k2_tilde: float
    mu: float
    xi: float
    N_sq: float


@dataclass(frozen=True)
class NoiseSpectrum:
    """Radial phase-noise amplitude Delta-theta(beta) for one imaging mode."""

    kind: str
    values: Callable[[np.ndarray], np.ndarray]

    def amplitude(self, beta):
        return self.values(np.asarray(beta, dtype=float))


def dipole_profile(beta_vec, theta_E_rad: float, cutoff: float):
    """Phi(beta) = 1/(beta^2 + theta_E^2) for |beta| < cutoff, else 0.

    beta_vec is a 2-vector or an (..., 2) array of scattering angles.
    """
    b = np.asarray(beta_vec, dtype=float)
    b2 = np.sum(b * b, axis=-1)
    out = np.where(b2 < cutoff**2, 1.0 / (b2 + theta_E_rad**2), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def full_disc_integral(theta_E_rad: float, cutoff: float) -> float:
    """Closed form of the Phi integral over the disc: pi ln(1 + theta_c^2/theta_E^2)."""
    return math.pi * math.log1p((cutoff / theta_E_rad) ** 2)


def _arc_measure_a(beta: float, intervals: Sequence[tuple[float, float]]) -> float:
    # Angular measure of the A set on the circle of radius beta.  Each
    # x-interval [a, b] clipped to [-beta, beta] covers the two arcs
    # arccos(a/beta)..arccos(b/beta) (upper and lower half circle).
    total = 0.0
    for a, b in intervals:
        lo = max(a, -beta)
        hi = min(b, beta)
        if lo < hi:
            total += 2.0 * (math.acos(lo / beta) - math.acos(hi / beta))
    return total


def stripe_integrals(
    beta_period: float,
    beam: BeamModel,
    rel_tol: float = 1e-6,
) -> tuple[float, float]:
    """Integrals of Phi over the A and S stripe sets inside the cutoff disc.

    The radial direction is integrated in t = ln(theta_E^2 + beta^2), where
    Phi beta dbeta = dt/2 exactly, so the integrand reduces to the angular
    arc measure of each set.  Adaptive quadrature runs per segment between
    stripe-edge tangency radii (the only kinks of the arc measure).

    Returns (int_A, int_S).  Raises NumericError if the accumulated
    quadrature error estimate exceeds rel_tol relative to the full-disc
    integral.
    """
    te = theta_E(beam)
    tc = bethe_ridge_angle(beam)
    geom = StripeGeometry(beta_period=beta_period, cutoff=tc, theta_E=te)
    intervals = geom.a_intervals()
    full = full_disc_integral(te, tc)
    if not intervals:
        return 0.0, full

    def arc_of_t(t):
        beta = math.sqrt(max(math.exp(t) - te * te, 0.0))
        return 0.5 * _arc_measure_a(beta, intervals)

    # Segment boundaries: tangency radii of every stripe edge, plus 0 and
    # the cutoff.  Within a segment the arc measure is smooth.
    edges = sorted({abs(x) for ab in intervals for x in ab if abs(x) < tc})
    radii = [0.0] + edges + [tc]
    t_of = lambda b: math.log(te * te + b * b)
    int_a = 0.0
    err = 0.0
    for b0, b1 in zip(radii[:-1], radii[1:]):
        if b1 - b0 <= 0:
            continue
        val, e = quad(arc_of_t, t_of(b0), t_of(b1), limit=200)
        int_a += val
        err += e
    if err > rel_tol * full:
        raise NumericError(
            f"stripe quadrature error {err:.3e} exceeds {rel_tol:.1e} of full disc"
        )
    return int_a, full - int_a


def stripe_integrals_riemann(
    beta_period: float,
    beam: BeamModel,
    n_radial: int = 2048,
    n_angular: int = 2048,
) -> tuple[float, float]:
    """Indicator-based polar Riemann sum over an (n_radial x n_angular) grid.

    Cross-validation route for stripe_integrals: radial nodes are midpoints
    in t = ln(theta_E^2 + beta^2) (so each cell carries equal Phi measure),
    angular nodes are uniform, and every cell is assigned to exactly one of
    A or S, which makes int_A + int_S equal the full-disc value identically.
    """
    te = theta_E(beam)
    tc = bethe_ridge_angle(beam)
    t0, t1 = math.log(te * te), math.log(te * te + tc * tc)
    t = t0 + (np.arange(n_radial) + 0.5) * (t1 - t0) / n_radial
    beta = np.sqrt(np.exp(t) - te * te)
    phi = (np.arange(n_angular) + 0.5) * (2 * math.pi / n_angular)
    bx = beta[:, None] * np.cos(phi)[None, :]
    geom = StripeGeometry(beta_period=beta_period, cutoff=tc, theta_E=te)
    in_a = geom.in_set_a(bx)
    cell = 0.5 * (t1 - t0) / n_radial * (2 * math.pi / n_angular)
    int_a = cell * np.count_nonzero(in_a)
    int_s = cell * (in_a.size - np.count_nonzero(in_a))
    return float(int_a), float(int_s)


def mu_of_beta(beta_period: float, beam: BeamModel, rel_tol: float = 1e-6) -> float:
    """mu = sqrt(int_A Phi / int_S Phi) for the stripe period lambda/sigma."""
    if beta_period <= 0:
        raise ValueError("beta_period must be positive")
    int_a, int_s = stripe_integrals(beta_period, beam, rel_tol=rel_tol)
    if int_a == 0.0:
        return 0.0
    return math.sqrt(int_a / int_s)


def solve_xi() -> tuple[float, float, float]:
    """Root of tan(xi) = 1/xi in (0, pi/2); returns (xi, cos_xi, xi_sq).

    xi sets the optimal accumulated disturbance angle 2 mu sqrt(w) of the
    signal-to-noise maximization; bracketed in [0.5, 1.5] and refined by
    Newton to a residual below 1e-12.
    """
    g = lambda x: math.tan(x) - 1.0 / x
    lo, hi = 0.5, 1.5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(8):
        x -= g(x) / (1.0 / math.cos(x) ** 2 + 1.0 / x**2)
    if abs(g(x)) > 1e-12:
        raise AssertionError("Newton refinement of xi did not reach 1e-12")
    return x, math.cos(x), x * x


_XI, _COS_XI, _XI_SQ = None, None, None


def _xi_cached() -> tuple[float, float, float]:
    global _XI, _COS_XI, _XI_SQ
    if _XI is None:
        _XI, _COS_XI, _XI_SQ = solve_xi()
    return _XI, _COS_XI, _XI_SQ


def plan_repetition(
    t_nm: float,
    beam: BeamModel,
    sigma_nm: float,
    dose: DoseModel,
    mu: float | None = None,
) -> RepetitionPlan:
    """Repetition numbers for specimen thickness t and resolution sigma.

    k1 = Lambda/t is the no-neutralization optimum, k2 = xi^2 Lambda /
    (4 mu^2 t) the neutralized one, k_opt their max.  The tilde values
    clamp to the dose budget N_sq from above and to the break-even floors
    (e, respectively cos^-2 xi) from below.  mu may be passed in to reuse
    a precomputed value; by default it is evaluated at period lambda/sigma.
    """
    if t_nm <= 0 or sigma_nm <= 0:
        raise ValueError("thickness and sigma must be positive")
    xi, cos_xi, xi_sq = _xi_cached()
    if mu is None:
        mu = mu_of_beta(beam.wavelength_nm / sigma_nm, beam)
    k1 = beam.mean_free_path_nm / t_nm
    k2 = xi_sq * k1 / (4.0 * mu * mu) if mu > 0 else math.inf
    k_opt = max(k2, k1)
    n_sq = dose_budget_nsq(sigma_nm, dose)
    k1_tilde = max(min(k1, n_sq), math.e)
    k2_tilde = max(min(k_opt, n_sq), 1.0 / cos_xi**2)
    return RepetitionPlan(
        k1=k1, k2=k2, k_opt=k_opt, k1_tilde=k1_tilde, k2_tilde=k2_tilde,
        mu=mu, xi=xi, N_sq=n_sq,
    )


def snr_improvement_no_isn(k1: float) -> float:
    """SNR gain sqrt(k1/e) of plain phase accumulation over shot noise."""
    if k1 <= 0:
        raise ValueError("k1 must be positive")
    return math.sqrt(k1 / math.e)


def noise_spectrum(kind: str, beta: float, plan: RepetitionPlan) -> float:
    """Phase-noise amplitude Delta-theta at one beta, given that beta's plan.

    classical: 1/sqrt(N_sq); qem: sqrt(e/k1~) x classical; qem_isn:
    classical / (sqrt(k2~) cos xi).  beta = 0 carries no noise (the dose
    budget diverges at zero spatial frequency).
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if beta == 0.0 or not math.isfinite(plan.N_sq):
        return 0.0
    classical = 1.0 / math.sqrt(plan.N_sq)
    if kind == "classical":
        return classical
    if kind == "qem":
        return math.sqrt(math.e / plan.k1_tilde) * classical
    if kind == "qem_isn":
        return classical / (math.sqrt(plan.k2_tilde) * math.cos(plan.xi))
    raise ValueError(f"unknown noise spectrum kind {kind!r}")


def _mu_interpolator(beam: BeamModel, n_points: int = 160) -> Callable:
    """mu(beta) on a log grid up to the 4*theta_c support edge, linear interp."""
    tc = bethe_ridge_angle(beam)
    grid = np.geomspace(2e-5, 4.0 * tc, n_points)
    vals = np.array([mu_of_beta(b, beam) for b in grid])

    def interp(beta):
        beta = np.asarray(beta, dtype=float)
        out = np.interp(beta, grid, vals, left=vals[0], right=0.0)
        return out

    return interp


def make_noise_spectrum(
    kind: str,
    t_nm: float,
    beam: BeamModel,
    dose: DoseModel,
    n_mu_points: int = 160,
) -> NoiseSpectrum:
    """Vectorized Delta-theta(beta) for image synthesis.

    Computes N_sq(beta) analytically and, for the neutralized mode, pulls
    mu(beta) from a precomputed radial interpolation table.
    """
    if kind not in ("classical", "qem", "qem_isn"):
        raise ValueError(f"unknown noise spectrum kind {kind!r}")
    xi, cos_xi, xi_sq = _xi_cached()
    lam = beam.wavelength_nm
    k1 = beam.mean_free_path_nm / t_nm
    mu_interp = _mu_interpolator(beam, n_mu_points) if kind == "qem_isn" else None

    def values(beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        out = np.zeros_like(beta)
        nz = beta > 0
        if not np.any(nz):
            return out
        sigma = lam / beta[nz]
        n_sq = dose.zeta * 8 * math.pi * sigma**4 / dose.damage_R_nm4
        classical = 1.0 / np.sqrt(n_sq)
        if kind == "classical":
            out[nz] = classical
        elif kind == "qem":
            k1t = np.maximum(np.minimum(k1, n_sq), math.e)
            out[nz] = np.sqrt(math.e / k1t) * classical
        else:
            mu = mu_interp(beta[nz])
            with np.errstate(divide="ignore"):
                k2 = np.where(mu > 0, xi_sq * k1 / (4.0 * mu**2), np.inf)
            k_opt = np.maximum(k2, k1)
            k2t = np.maximum(np.minimum(k_opt, n_sq), 1.0 / cos_xi**2)
            out[nz] = classical / (np.sqrt(k2t) * cos_xi)
        return out

    return NoiseSpectrum(kind=kind, values=values)


def figure2_curves(
    beta_grid: Sequence[float],
    lambda_over_t: Sequence[float],
    beam: BeamModel,
    dose: DoseModel,
) -> dict:
    """Optimal repetition number versus beta for each Lambda/t ratio.

    Returns a CSV-ready mapping with 'beta_mrad', one 'k_opt_L<ratio>'
    column per ratio, and 'n_sq'.
    """
    betas = np.asarray(list(beta_grid), dtype=float)
    ratios = list(lambda_over_t)
    if betas.size == 0 or not ratios:
        raise ValueError("beta grid and ratio list must be non-empty")
    lam = beam.wavelength_nm
    mus = np.array([mu_of_beta(b, beam) for b in betas])
    table: dict[str, np.ndarray] = {"beta_mrad": betas * 1e3}
    n_sq = np.empty_like(betas)
    for ratio in ratios:
        t_nm = beam.mean_free_path_nm / ratio
        k_opt = np.empty_like(betas)
        for i, (b, mu) in enumerate(zip(betas, mus)):
            plan = plan_repetition(t_nm, beam, lam / b, dose, mu=mu)
            k_opt[i] = plan.k_opt
            n_sq[i] = plan.N_sq
        table[f"k_opt_L{ratio:g}"] = k_opt
    table["n_sq"] = n_sq
    return table


def crossover_mu() -> float:
    """mu value at which k2 = k1, i.e. xi/2 (~0.43)."""
    xi, _, _ = _xi_cached()
    return xi / 2.0
