"""Radiation-damage law, dose budgets, and relativistic beam quantities.

Unit conventions used throughout the package: lengths in nm, angles in
radians, energies in eV, fluence in nm^-2.  Formatted output may use mrad
or pm, but every stored value follows these base units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# CODATA: electron rest energy and hc in the eV/nm unit system.
ELECTRON_REST_ENERGY_EV = 510_998.95
HC_EV_NM = 1_239.841_98

# Default experimental parameters (300 keV beam, 20 eV plasmon loss,
# inelastic mean free path 300 nm, purple-membrane damage constant).
DEFAULT_KINETIC_ENERGY_EV = 300e3
DEFAULT_ENERGY_LOSS_EV = 20.0
DEFAULT_MEAN_FREE_PATH_NM = 300.0
DEFAULT_DAMAGE_R_NM4 = 7e-4
DEFAULT_ZETA = 0.064


@dataclass(frozen=True)
class BeamModel:
    """Relativistic electron beam with a fixed characteristic energy loss."""

    kinetic_energy_eV: float
    energy_loss_eV: float
    wavelength_nm: float
    gamma: float
    beta_rel: float
    mean_free_path_nm: float

    def __post_init__(self):
        if self.kinetic_energy_eV <= 0:
            raise ValueError("kinetic energy must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not 0 < self.beta_rel < 1:
            raise ValueError("beta_rel must lie in (0, 1)")
        if self.mean_free_path_nm <= 0:
            raise ValueError("mean free path must be positive")


@dataclass(frozen=True)
class DoseModel:
    """Damage constant R, dose-budget fraction zeta, and illuminated area."""

    damage_R_nm4: float = DEFAULT_DAMAGE_R_NM4
    zeta: float = DEFAULT_ZETA
    area_nm2: float = 1.0

    def __post_init__(self):
        if self.damage_R_nm4 <= 0:
            raise ValueError("damage constant R must be positive")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.area_nm2 <= 0:
            raise ValueError("area must be positive")


@dataclass(frozen=True)
class DamageState:
    """Accumulated-dose bookkeeping: B = R*F and the rms atom displacement."""

    fluence_nm2: float
    B_factor_nm2: float
    std_displacement_nm: float

    @classmethod
    def at_fluence(cls, fluence_nm2: float, model: DoseModel) -> "DamageState":
        if fluence_nm2 < 0:
            raise ValueError("fluence must be non-negative")
        b = model.damage_R_nm4 * fluence_nm2
        return cls(fluence_nm2, b, math.sqrt(b / (8 * math.pi**2)))


def electron_wavelength_nm(kinetic_energy_eV: float) -> float:
    """lambda = hc / sqrt(E_K (E_K + 2 m_e c^2)), the relativistic de Broglie wavelength."""
    if kinetic_energy_eV <= 0:
        raise ValueError("kinetic energy must be positive")
    return HC_EV_NM / math.sqrt(
        kinetic_energy_eV * (kinetic_energy_eV + 2 * ELECTRON_REST_ENERGY_EV)
    )


def make_beam(
    kinetic_energy_eV: float = DEFAULT_KINETIC_ENERGY_EV,
    energy_loss_eV: float = DEFAULT_ENERGY_LOSS_EV,
    mean_free_path_nm: float = DEFAULT_MEAN_FREE_PATH_NM,
) -> BeamModel:
    """Build a BeamModel with all derived relativistic quantities filled in."""
    gamma = 1.0 + kinetic_energy_eV / ELECTRON_REST_ENERGY_EV
    beta_rel = math.sqrt(1.0 - 1.0 / gamma**2)
    return BeamModel(
        kinetic_energy_eV=kinetic_energy_eV,
        energy_loss_eV=energy_loss_eV,
        wavelength_nm=electron_wavelength_nm(kinetic_energy_eV),
        gamma=gamma,
        beta_rel=beta_rel,
        mean_free_path_nm=mean_free_path_nm,
    )


def damage_attenuation(q_per_nm: float, fluence: float, model: DoseModel) -> float:
    """Intensity attenuation e^{-R F q^2 / 8 pi^2} of a diffraction spot at q."""
    if q_per_nm < 0 or fluence < 0:
        raise ValueError("q and fluence must be non-negative")
    return math.exp(-model.damage_R_nm4 * fluence * q_per_nm**2 / (8 * math.pi**2))


def amplitude_decay_F0(sigma_nm: float, model: DoseModel) -> float:
    """Fluence scale F0 = 4 sigma^2 / R at which a Fourier amplitude decays by 1/e."""
    if sigma_nm <= 0:
        raise ValueError("sigma must be positive")
    return 4.0 * sigma_nm**2 / model.damage_R_nm4


def solve_zeta() -> tuple[float, float]:
    """Solve e^beta = 2 beta + 1 for the positive root; return (beta_opt, zeta).

    zeta = beta_opt / (2 pi^2) is the fraction of the 1/e-decay fluence
    that minimizes the amplitude-estimator variance.  Bracketed bisection
    on [0.5, 3] refined by Newton; the residual is driven below 1e-12.
    """
    f = lambda b: math.exp(b) - 2.0 * b - 1.0
    lo, hi = 0.5, 3.0
    if not (f(lo) < 0 < f(hi)):
        raise AssertionError("root bracket [0.5, 3] violated")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    for _ in range(8):
        beta -= f(beta) / (math.exp(beta) - 2.0)
    if abs(f(beta)) > 1e-12:
        raise AssertionError("Newton refinement did not reach 1e-12 residual")
    return beta, beta / (2 * math.pi**2)


def estimator_variance(beta_ratio: float, k: int, A: float, F0: float) -> float:
    """Variance of the decaying-amplitude estimator at fluence ratio beta = F/F0.

    Var = (1 / (k A F0)) * beta / (1 - e^{-beta})^2; minimized at the
    solve_zeta() root.
    """
    if beta_ratio <= 0:
        raise ValueError("beta ratio F/F0 must be positive")
    if k < 1 or A <= 0 or F0 <= 0:
        raise ValueError("k >= 1, A > 0, F0 > 0 required")
    return beta_ratio / (k * A * F0 * (1.0 - math.exp(-beta_ratio)) ** 2)


def fluence_opt(sigma_nm: float, model: DoseModel) -> float:
    """Optimal fluence F_opt = zeta * 8 pi^2 sigma^2 / R for resolution sigma."""
    if sigma_nm <= 0:
        raise ValueError("sigma must be positive")
    return model.zeta * 8 * math.pi**2 * sigma_nm**2 / model.damage_R_nm4


def dose_budget_nsq(sigma_nm: float, model: DoseModel) -> float:
    """Electron budget N_sq = zeta * 8 pi sigma^4 / R per reciprocal-space square.

    Independent of the illuminated area: the per-square fluence carries a
    1/A that the dose N = F*A cancels.
    """
    if sigma_nm <= 0:
        raise ValueError("sigma must be positive")
    return model.zeta * 8 * math.pi * sigma_nm**4 / model.damage_R_nm4


def band_fluence(q_per_nm: float, dq_per_nm: float, model: DoseModel) -> float:
    """Fluence budget dF = zeta * 64 pi^4 dq / (R q^3) for a ring [q, q+dq]."""
    if q_per_nm <= 0 or dq_per_nm <= 0:
        raise ValueError("q and dq must be positive")
    return model.zeta * 64 * math.pi**4 * dq_per_nm / (model.damage_R_nm4 * q_per_nm**3)


def dose_budget_nsq_from_band(sigma_nm: float, model: DoseModel, area_nm2: float) -> float:
    """N_sq recomputed through the ring-budget construction (cross-check route).

    Splits the ring [q, q+dq] into 2 pi q / dq squares of side dq with
    A dq^2 = (2 pi)^2, and multiplies the per-square fluence by A.  Must
    equal dose_budget_nsq for every area.
    """
    if area_nm2 <= 0:
        raise ValueError("area must be positive")
    q = 2 * math.pi / sigma_nm
    dq = 2 * math.pi / math.sqrt(area_nm2)
    df = band_fluence(q, dq, model)
    n_squares = 2 * math.pi * q / dq
    return (df / n_squares) * area_nm2


def theta_E(beam: BeamModel) -> float:
    """Characteristic inelastic angle theta_E = E / (gamma m_e c^2 beta^2), in rad.

    This is the relativistic Delta k / k for energy loss E; it reduces to
    E / (2 E_K) in the nonrelativistic limit.
    """
    if beam.energy_loss_eV < 0:
        raise ValueError("energy loss must be non-negative")
    return beam.energy_loss_eV / (
        beam.gamma * ELECTRON_REST_ENERGY_EV * beam.beta_rel**2
    )


def bethe_ridge_angle(beam: BeamModel) -> float:
    """Kinematic cutoff angle theta_c = sqrt(2 theta_E / gamma), in rad."""
    return math.sqrt(2.0 * theta_E(beam) / beam.gamma)
