"""Inelastically scattered electron states and Monte-Carlo disturbance estimates.

A dipole-region inelastic event at position r0 with in-plane dipole
direction a multiplies the beam-grid wavefunction by a periodized envelope
e_{n,m}.  The envelope is built by sampling the far-field dipole amplitude
on the reciprocal lattice of the M x M cell and inverse-transforming, which
makes the resulting far-field grids satisfy the negative-complex-conjugate
pairing about the primary pixels (+-M/4, 0) exactly.  That pairing is what
keeps the per-event disturbance eta of the ancilla real after the
randomized phase plate and the split inverse transform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SamplingError
from .physics import BeamModel, bethe_ridge_angle, theta_E
from .qsim import (
    JointState,
    PhaseMap,
    ProtocolOptions,
    Q1State,
    RoundOutcome,
    _cdft,
    centered_dft2,
    constrained_phase_map,
    run_electron,
)


@dataclass(frozen=True)
class DipoleEvent:
    """One inelastic scattering event: center, in-plane dipole direction, loss."""

    r0_nm: tuple[float, float]
    a_dir: tuple[float, float]
    energy_loss_eV: float = 20.0

    def __post_init__(self):
        ax, ay = self.a_dir
        n = math.hypot(ax, ay)
        if not math.isclose(n, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("a_dir must be a unit vector")

    @classmethod
    def random(cls, cell_nm: float, rng: np.random.Generator, energy_loss_eV: float = 20.0):
        """Uniform center in the L x L cell, uniform in-plane direction."""
        r0 = tuple(rng.uniform(-cell_nm / 2, cell_nm / 2, size=2))
        phi = rng.uniform(0.0, 2 * math.pi)
        return cls(r0, (math.cos(phi), math.sin(phi)), energy_loss_eV)


@dataclass(frozen=True)
class EnvelopeGrid:
    """Discretized periodized envelope e_{n,m} of one event."""

    e_nm: np.ndarray
    pitch_nm: float

    @property
    def M(self) -> int:
        return self.e_nm.shape[0]


@dataclass(frozen=True)
class EGrid:
    """Far-field coefficient grids for the two incident tilts."""

    E_s: np.ndarray
    E_a: np.ndarray


def far_field_dipole(beta_vec, event: DipoleEvent, beam: BeamModel) -> complex:
    """Tilted dipole far-field amplitude at scattering angle beta_vec (rad).

    e^{-i q . r0} (q-hat . a) / sqrt(beta^2 + theta_E^2) inside the cutoff
    disc, zero outside; q = beta * 2 pi / lambda is the transverse momentum
    transfer.  The r0 = 0, beta -> -beta antisymmetry makes the amplitude
    odd.
    """
    b = np.asarray(beta_vec, dtype=float)
    te = theta_E(beam)
    tc = bethe_ridge_angle(beam)
    bnorm = np.sqrt(np.sum(b * b, axis=-1))
    a = np.asarray(event.a_dir)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(bnorm > 0, np.sum(b * a, axis=-1) / np.where(bnorm > 0, bnorm, 1.0), 0.0)
    mag = direction / np.sqrt(bnorm**2 + te**2)
    k_z = 2 * math.pi / beam.wavelength_nm
    tilt = np.exp(-1j * k_z * np.sum(b * np.asarray(event.r0_nm), axis=-1))
    out = np.where(bnorm < tc, mag * tilt, 0.0)
    return complex(out) if np.ndim(out) == 0 else out


def build_envelope(event: DipoleEvent, M: int, sigma_nm: float, beam: BeamModel) -> EnvelopeGrid:
    """Sample the far-field dipole on the cell's reciprocal lattice and
    inverse-transform to the beam grid.

    The lattice sum over all (r, s) with |beta| < theta_c implements the
    L-periodized envelope exactly; entries beyond the first Brillouin zone
    fold back onto the M x M grid before the transform.
    """
    L = M * sigma_nm
    lam = beam.wavelength_nm
    tc = bethe_ridge_angle(beam)
    radius = int(math.ceil(tc * L / lam))
    if radius < 2:
        warnings.warn("reciprocal lattice resolves the cutoff disc with <2 samples")
    r = np.arange(-radius, radius + 1)
    rr, ss = np.meshgrid(r, r, indexing="ij")
    beta = np.stack([rr, ss], axis=-1) * (lam / L)
    f = far_field_dipole(beta, event, beam)
    folded = np.zeros((M, M), dtype=complex)
    np.add.at(folded, ((rr + M // 2) % M, (ss + M // 2) % M), f)
    # e_{n,m} = (1/L^2) sum f e^{2 pi i (r n + s m)/M}; centered_dft2 is the
    # unitary version of that sum (prefactor 1/M).
    e = centered_dft2(folded) * (M / L**2)
    tail = np.max(np.abs(e[0, :])) + np.max(np.abs(e[:, 0]))
    if tail > 0.5 * np.max(np.abs(e)):
        warnings.warn("envelope does not decay within the cell; increase M*sigma")
    return EnvelopeGrid(e_nm=e, pitch_nm=sigma_nm)


def egrid_from_envelope(env: EnvelopeGrid) -> EGrid:
    """Far-field grids of the two tilted beam arrays after the event.

    E^(s)_{n,m} = (1/M) sum_{r,s} e_{r,s} e^{2 pi i ((n + M/4) r + m s)/M},
    and E^(a) with the opposite quarter-shift.
    """
    M = env.M
    n = np.arange(M) - M // 2
    tilt = np.exp(0.5j * math.pi * n)[:, None]
    e_s = centered_dft2(env.e_nm * tilt)
    e_a = centered_dft2(env.e_nm * np.conj(tilt))
    return EGrid(E_s=e_s, E_a=e_a)


def symmetry_residual(grid: np.ndarray) -> float:
    """Max deviation from the pairing E_{+-M/4+a, b} = -conj(E_{+-M/4-a, -b}).

    Both pairings reduce to the index map (i, j) -> ((M - i) % M, (M - j) % M)
    with a sign flip, which is checked over the full grid.
    """
    M = grid.shape[0]
    i = np.arange(M)
    partner = grid[np.ix_((M - i) % M, (M - i) % M)]
    return float(np.max(np.abs(grid + np.conj(partner))))


def split_invert_grid(grid: np.ndarray) -> np.ndarray:
    """Split inverse transform of a bare far-field grid (no Q1 axis)."""
    M = grid.shape[0]
    h = M // 2
    out = np.empty_like(grid)
    for lo, hi in ((0, h), (h, M)):
        out[lo:hi, :] = _cdft(_cdft(grid[lo:hi, :], -1, -1), -2, -1)
    return out


def inject_event(state: JointState, env: EnvelopeGrid) -> JointState:
    """Multiply the envelope onto both Q1 branches and renormalize."""
    if env.M != state.M:
        raise ValueError("envelope size does not match state")
    amps = state.amps * env.e_nm[None]
    nrm = np.linalg.norm(amps)
    if nrm == 0:
        raise SamplingError("envelope vanished on every pixel; event rejected")
    return JointState(amps / nrm, state.M)


def _fold_eta(ratio: complex) -> complex:
    # The measured pixel tells which channel dominates; fold ratios beyond
    # unit magnitude onto the recoverable branch (equivalent to correcting
    # the ancilla with the opposite swap).
    return ratio if abs(ratio) <= 1.0 else 1.0 / ratio


def run_event_electron(
    q1: Q1State,
    pmap: PhaseMap,
    event: DipoleEvent,
    beam: BeamModel,
    rng: np.random.Generator,
    opts: ProtocolOptions = ProtocolOptions(),
) -> tuple[Q1State, RoundOutcome, float]:
    """One flagged electron: envelope in place of the specimen phase,
    randomized plate in place of the deterministic one.

    Returns the corrected ancilla, the outcome record, and the realized
    per-event disturbance eta (the real shift of c_a/c_s).
    """
    env = build_envelope(event, pmap.M, pmap.pitch_nm, beam)
    z_pre = q1.normalized().ratio()
    q1_new, rec = run_electron(q1, pmap, rng, opts, envelope=env.e_nm)
    z_post = q1_new.ratio()
    if abs(z_post) > 1.0:
        q1_new = q1_new.swapped()
        z_post = 1.0 / z_post
    eta = float((z_post - z_pre).real)
    rec = RoundOutcome(rec.q2_bit, rec.electron_pixel, q1_new)
    return q1_new, rec, eta


def isn_round(
    pmap: PhaseMap,
    events: list[DipoleEvent | None],
    alpha0: complex,
    beam: BeamModel,
    opts: ProtocolOptions = ProtocolOptions(),
    rng: np.random.Generator | None = None,
) -> tuple[Q1State, list[float]]:
    """Run one round whose i-th electron is flagged iff events[i] is not None.

    Returns the final ancilla and the per-event eta list.
    """
    rng = np.random.default_rng() if rng is None else rng
    q1 = Q1State(1.0, 1j * alpha0).normalized()
    etas = []
    for ev in events:
        if ev is None:
            q1, _ = run_electron(q1, pmap, rng, opts)
        else:
            q1, _, eta = run_event_electron(q1, pmap, ev, beam, rng, opts)
            etas.append(eta)
    return q1, etas


def poisson_event_schedule(
    k: int,
    t_nm: float,
    beam: BeamModel,
    cell_nm: float,
    rng: np.random.Generator,
    count: int | None = None,
) -> list[DipoleEvent | None]:
    """Flag electrons for inelastic events.

    The number of events defaults to Poisson(k t / Lambda) (capped at k);
    pass count to fix it.  Flagged electrons are chosen uniformly.
    """
    w = rng.poisson(k * t_nm / beam.mean_free_path_nm) if count is None else count
    w = min(int(w), k)
    schedule: list[DipoleEvent | None] = [None] * k
    for i in rng.choice(k, size=w, replace=False):
        schedule[i] = DipoleEvent.random(cell_nm, rng)
    return schedule


def sample_event_eta(
    M: int,
    sigma_nm: float,
    beam: BeamModel,
    rng: np.random.Generator,
    n_trials: int,
    plus_sign: bool = False,
) -> np.ndarray:
    """Fast Monte Carlo of the per-event disturbance at alpha = 0.

    Each trial draws an event, builds the randomized far-field grids,
    applies the split inverse transform, samples the electron pixel from
    |h_s|^2 + |h_a|^2, and records the folded channel ratio.  This is the
    same arithmetic as one flagged electron of isn_round with a flat
    specimen, without the joint-state overhead.
    """
    L = M * sigma_nm
    etas = np.empty(n_trials)
    for trial in range(n_trials):
        event = DipoleEvent.random(L, rng)
        env = build_envelope(event, M, sigma_nm, beam)
        eg = egrid_from_envelope(env)
        xi = constrained_phase_map(M, rng, plus_sign=plus_sign)
        phase = np.exp(1j * xi)
        g_s = split_invert_grid(eg.E_s * phase)
        g_a = split_invert_grid(eg.E_a * phase)
        h_s, h_a = g_s.imag, g_a.imag
        p = h_s**2 + h_a**2
        flat = rng.choice(p.size, p=(p / p.sum()).ravel())
        i, j = np.unravel_index(flat, p.shape)
        if i < M // 2:
            ratio = h_a[i, j] / h_s[i, j] if h_s[i, j] != 0 else math.inf
        else:
            ratio = h_s[i, j] / h_a[i, j] if h_a[i, j] != 0 else math.inf
        etas[trial] = _fold_eta(ratio).real if math.isfinite(ratio) else 0.0
    return etas


def random_walk_accumulation(
    w: int, mu: float, trials: int, rng: np.random.Generator
) -> float:
    """RMS of a w-step sign walk with step size mu."""
    if w < 0:
        raise ValueError("w must be non-negative")
    if w == 0:
        return 0.0
    signs = rng.integers(0, 2, size=(trials, w)) * 2 - 1
    sums = mu * signs.sum(axis=1)
    return float(np.sqrt(np.mean(sums**2)))


def resampled_walk_rms(
    etas: np.ndarray, w: int, trials: int, rng: np.random.Generator
) -> float:
    """RMS of w-event sums drawn (with random signs) from an empirical eta pool."""
    if w == 0:
        return 0.0
    draws = rng.choice(etas, size=(trials, w), replace=True)
    signs = rng.integers(0, 2, size=(trials, w)) * 2 - 1
    return float(np.sqrt(np.mean((draws * signs).sum(axis=1) ** 2)))


def signal_attenuation(k: float, t: float, mean_free_path: float, mu: float) -> float:
    """Accumulated-phase attenuation cos(2 mu sqrt(k t / Lambda)).

    The figure of merit k cos^2(...) is maximized at the planned k2.
    """
    if k <= 0 or t <= 0 or mean_free_path <= 0:
        raise ValueError("k, t, and the mean free path must be positive")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    return math.cos(2.0 * mu * math.sqrt(k * t / mean_free_path))
