"""Exact joint statevector engine for the entangled measurement protocol.

The simulated system is an M x M grid of focused electron beams tensored
with the phase-accumulating ancilla qubit Q1.  One measurement round runs
the following pipeline, repeated k times before Q1 is read out:

  1.  initialize Q1 to |s>+i*alpha|a> (normalized),
  2.  prepare a fresh electron in (|s>+|a>)/sqrt(2), where |s>, |a> are
      the two symmetrically tilted beam arrays,
  3.  CNOT: flip Q1 s<->a iff the electron is in |a>,
  4.  transmit through the specimen (per-pixel phase e^{i theta}),
  5.  2-D discrete Fourier transform to the far field,
  6.  multiply i at the two primary-beam pixels (+-M/4, 0)
      [or, for an electron flagged inelastic, apply the constrained
      random phase map of randomize_step6tilde instead],
  7.  measure the far-field half-plane bit Q2 (outcome c),
  8.  inverse DFT applied separately to the two half-planes ("split"
      transform), which leaves Q2 alone and restores a beam-grid picture,
  9.  measure the electron pixel (n~, m^) and discard the electron,
  10. flip Q1 s<->a iff c = 1,
  11. repeat from 2,
  12. finally measure Q1 in the basis (|0> +- i|1>)/sqrt(2).

Array layout: amplitudes are stored as complex (2, M, M) with axis 0 the
Q1 basis (0 = s, 1 = a) and electron indices n, m in [-M/2, M/2) mapped
to array indices n + M/2, m + M/2.  After the split inverse transform the
row index encodes (Q2, n~): rows [0, M/2) are Q2 = 0 with n~ = row - M/4,
rows [M/2, M) are Q2 = 1 with n~ = row - 3M/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, FitError, SamplingError

NORM_TOL = 1e-10


def _require_valid_m(M: int) -> None:
    if M < 4 or M & (M - 1) != 0:
        raise ConfigError(f"M must be a power of 2 and at least 4, got {M}")


def _cdft(a: np.ndarray, axis: int, sign: int) -> np.ndarray:
    """Unitary DFT with kernel e^{sign 2 pi i n k / N} / sqrt(N) on
    centered indices n, k in [-N/2, N/2)."""
    n = a.shape[axis]
    shifted = np.fft.ifftshift(a, axes=axis)
    if sign > 0:
        out = np.fft.ifft(shifted, axis=axis) * n
    else:
        out = np.fft.fft(shifted, axis=axis)
    return np.fft.fftshift(out, axes=axis) / math.sqrt(n)


def centered_dft2(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unitary 2-D DFT on the last two axes, kernel e^{+2 pi i(nr+ms)/M}/M
    (conjugate kernel when inverse)."""
    sign = -1 if inverse else +1
    return _cdft(_cdft(a, -1, sign), -2, sign)


@dataclass
class Q1State:
    """Ancilla state c_s|s> + c_a|a>."""

    c_s: complex
    c_a: complex

    def normalized(self) -> "Q1State":
        n = math.sqrt(abs(self.c_s) ** 2 + abs(self.c_a) ** 2)
        if n == 0:
            raise SamplingError("cannot normalize a zero Q1 state")
        return Q1State(self.c_s / n, self.c_a / n)

    def as_vector(self) -> np.ndarray:
        return np.array([self.c_s, self.c_a], dtype=complex)

    def ratio(self) -> complex:
        return self.c_a / self.c_s

    def swapped(self) -> "Q1State":
        return Q1State(self.c_a, self.c_s)


@dataclass
class JointState:
    """Joint electron (M x M) + Q1 amplitude vector."""

    amps: np.ndarray
    M: int

    @classmethod
    def from_product(cls, electron: np.ndarray, q1: Q1State) -> "JointState":
        M = electron.shape[0]
        _require_valid_m(M)
        amps = q1.normalized().as_vector()[:, None, None] * electron[None, :, :]
        return cls(np.ascontiguousarray(amps, dtype=complex), M)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def check_norm(self) -> None:
        if abs(self.norm() - 1.0) > NORM_TOL:
            raise AssertionError(f"state norm drifted to {self.norm()!r}")


@dataclass(frozen=True)
class PhaseMap:
    """Specimen phase-shift field theta(n sigma, m sigma) on the beam grid.

    The mean is subtracted on construction (the global phase is not
    observable), and the weak-phase guard rejects maps outside the stated
    limit.
    """

    theta: np.ndarray
    pitch_nm: float

    def __post_init__(self):
        _require_valid_m(self.theta.shape[0])
        if self.theta.shape[0] != self.theta.shape[1]:
            raise ConfigError("phase map must be square")
        if self.pitch_nm <= 0:
            raise ConfigError("pixel pitch must be positive")

    @classmethod
    def from_array(cls, theta, pitch_nm: float, weak_phase_limit: float = 0.3) -> "PhaseMap":
        theta = np.asarray(theta, dtype=float)
        theta = theta - theta.mean()
        if weak_phase_limit is not None and np.max(np.abs(theta)) >= weak_phase_limit:
            raise ConfigError(
                f"max |theta| = {np.max(np.abs(theta)):.3g} exceeds weak-phase limit"
            )
        return cls(theta=theta, pitch_nm=pitch_nm)

    @property
    def M(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class RoundOutcome:
    """Record of one electron passage: half-plane bit, pixel, Q1 after."""

    q2_bit: int
    electron_pixel: tuple[int, int]
    q1_after: Q1State


@dataclass(frozen=True)
class ProtocolOptions:
    specimen_mode: str = "exact"          # "exact" | "linearized"
    plus_sign_randomization: bool = False  # main-text sign variant of Xi
    randomize_all: bool = False            # apply the random phase plate to
                                           # elastic electrons as well


def _index_grids(M: int):
    n = np.arange(M) - M // 2
    return n[:, None], n[None, :]


def make_incident(M: int, which: str) -> np.ndarray:
    """Electron amplitude grid for |s>, |a>, or their normalized sum.

    |s> has amplitudes e^{+i pi n/2}/M, |a> the conjugate tilt; the
    superposition interferes onto even-n columns with signs (-1)^{n/2}.
    """
    _require_valid_m(M)
    n, _ = _index_grids(M)
    phase = np.exp(0.5j * math.pi * n) * np.ones((M, M))
    if which == "s":
        return phase / M
    if which == "a":
        return np.conj(phase) / M
    if which == "superposition":
        return (phase + np.conj(phase)) / (M * math.sqrt(2))
    raise ConfigError(f"unknown incident state {which!r}")


def entangle_cnot(state: JointState) -> JointState:
    """Flip Q1 s<->a on the |a> electron component.

    Realized as P_s x I + P_a x X + (I - P_s - P_a) x I, which swaps the
    |a>-projected part of the electron wavefunction between the two Q1
    branches and is an involution.
    """
    M = state.M
    a_grid = make_incident(M, "a")
    psi_s, psi_a = state.amps[0], state.amps[1]
    ca_s = np.vdot(a_grid, psi_s)
    ca_a = np.vdot(a_grid, psi_a)
    new = state.amps.copy()
    new[0] = psi_s + (ca_a - ca_s) * a_grid
    new[1] = psi_a + (ca_s - ca_a) * a_grid
    return JointState(new, M)


def apply_specimen(state: JointState, pmap: PhaseMap, mode: str = "exact") -> JointState:
    """Per-pixel specimen transmission on both Q1 branches.

    exact: multiply e^{i theta}.  linearized: multiply (1 + i theta) and
    renormalize (the weak-phase analysis device).
    """
    if pmap.M != state.M:
        raise ConfigError("phase map size does not match state")
    if mode == "exact":
        factor = np.exp(1j * pmap.theta)
        return JointState(state.amps * factor[None], state.M)
    if mode == "linearized":
        amps = state.amps * (1.0 + 1j * pmap.theta)[None]
        return JointState(amps / np.linalg.norm(amps), state.M)
    raise ConfigError(f"unknown specimen mode {mode!r}")


def qft2d(state: JointState, inverse: bool = False) -> JointState:
    """Unitary 2-D DFT on the electron index, identity on Q1."""
    return JointState(centered_dft2(state.amps, inverse=inverse), state.M)


def phase_plate_step6(state: JointState) -> JointState:
    """Multiply i at the two primary-beam far-field pixels (+-M/4, 0)."""
    M = state.M
    new = state.amps.copy()
    c = M // 2
    new[:, c - M // 4, c] *= 1j
    new[:, c + M // 4, c] *= 1j
    return JointState(new, M)


def constrained_phase_map(M: int, rng: np.random.Generator, plus_sign: bool = False) -> np.ndarray:
    """Random phase map Xi honoring the far-field pairing constraints.

    Xi is M-periodic in both indices and antisymmetric under the pairing
    (n, m) -> (M/2 - n, -m) about the primary pixels (the plus_sign variant
    uses symmetric pairing instead).  Unconstrained entries are uniform in
    [0, 2 pi); pairing fixed points are forced to 0 in the antisymmetric
    case.
    """
    _require_valid_m(M)
    xi = np.zeros((M, M))
    done = np.zeros((M, M), dtype=bool)
    sign = 1.0 if plus_sign else -1.0
    for i in range(M):
        # pairing n -> M/2 - n about the +M/4 pixel; the -M/4 constraint
        # reduces to the same index map under M-periodicity
        ip = (3 * M // 2 - i) % M
        for j in range(M):
            if done[i, j]:
                continue
            jp = (M - j) % M
            if ip == i and jp == j:
                # self-paired pixel: antisymmetry forces 0, otherwise free
                xi[i, j] = rng.uniform(0.0, 2 * math.pi) if plus_sign else 0.0
                done[i, j] = True
            else:
                u = rng.uniform(0.0, 2 * math.pi)
                xi[i, j] = u
                xi[ip, jp] = sign * u
                done[i, j] = True
                done[ip, jp] = True
    return xi


def randomize_step6tilde(
    state: JointState, rng: np.random.Generator, plus_sign: bool = False
) -> tuple[JointState, np.ndarray]:
    """Far-field randomization replacing the phase plate for flagged electrons.

    Returns the new state and the phase map used, for reproducibility and
    symmetry checks.
    """
    xi = constrained_phase_map(state.M, rng, plus_sign=plus_sign)
    return JointState(state.amps * np.exp(1j * xi)[None], state.M), xi


def split_inverse_qft(state: JointState) -> JointState:
    """Inverse DFT applied separately to the two far-field half-planes.

    Rows r in [-M/2, 0) transform about the center -M/4, rows [0, M/2)
    about +M/4; each half is a unitary (M/2 x M) inverse DFT, so Q2 (the
    half-plane bit) is untouched.  See the module docstring for the
    output row encoding of (Q2, n~).
    """
    M = state.M
    h = M // 2
    new = np.empty_like(state.amps)
    for lo, hi in ((0, h), (h, M)):
        block = state.amps[:, lo:hi, :]
        out = _cdft(_cdft(block, -1, -1), -2, -1)
        new[:, lo:hi, :] = out
    return JointState(new, M)


def pixel_row_to_q2_ntilde(row: int, M: int) -> tuple[int, int]:
    """Decode a post-split-transform row index into (q2 bit, n~)."""
    if row < M // 2:
        return 0, row - M // 4
    return 1, row - 3 * M // 4


def q1_up_probability(q1: Q1State) -> float:
    """Probability of the 'up' outcome (|0>+i|1>)/sqrt(2) for a Q1 state.

    In the s/a basis the up state is (e^{i pi/4}|s> + e^{-i pi/4}|a>)/sqrt(2),
    so a state |s> + i alpha |a> (alpha real) gives (1 - sin 2 alpha)/2
    after normalization.
    """
    amp = (
        np.exp(-1j * math.pi / 4) * q1.c_s + np.exp(1j * math.pi / 4) * q1.c_a
    ) / math.sqrt(2)
    return float(abs(amp) ** 2 / (abs(q1.c_s) ** 2 + abs(q1.c_a) ** 2))


def measure(state: JointState, what: str, rng: np.random.Generator):
    """Born-rule measurement with collapse and renormalization.

    what = "q2": returns (c, collapsed JointState); the state must be in
    the far-field representation, and c = 0 selects rows r < 0.
    what = "electron_pixels": returns ((q2, n~, m^), collapsed Q1State);
    the state must be in the post-split-transform representation.
    what = "q1_updown": returns (outcome in {+1, -1}, collapsed Q1State)
    after tracing out an electron register that must be unentangled.
    """
    M = state.M
    if what == "q2":
        p0 = float(np.sum(np.abs(state.amps[:, : M // 2, :]) ** 2))
        ptot = float(np.sum(np.abs(state.amps) ** 2))
        if ptot <= 0:
            raise SamplingError("zero-norm state")
        c = 0 if rng.random() < p0 / ptot else 1
        new = state.amps.copy()
        if c == 0:
            new[:, M // 2 :, :] = 0.0
        else:
            new[:, : M // 2, :] = 0.0
        nrm = np.linalg.norm(new)
        if nrm == 0:
            raise SamplingError("collapsed onto a zero-probability branch")
        return c, JointState(new / nrm, M)
    if what == "electron_pixels":
        probs = np.sum(np.abs(state.amps) ** 2, axis=0)
        total = probs.sum()
        if total <= 0:
            raise SamplingError("zero-norm state")
        flat = rng.choice(probs.size, p=(probs / total).ravel())
        i, j = np.unravel_index(flat, probs.shape)
        q2, ntilde = pixel_row_to_q2_ntilde(int(i), M)
        q1 = Q1State(state.amps[0, i, j], state.amps[1, i, j]).normalized()
        return (q2, ntilde, int(j) - M // 2), q1
    if what == "q1_updown":
        q1 = extract_q1(state)
        p_up = q1_up_probability(q1)
        return (1 if rng.random() < p_up else -1), q1
    raise ConfigError(f"unknown measurement {what!r}")


def extract_q1(state: JointState) -> Q1State:
    """Q1 state of a product JointState (raises if entangled)."""
    flat = state.amps.reshape(2, -1)
    # dominant pixel carries the ratio; verify separability
    k = int(np.argmax(np.sum(np.abs(flat) ** 2, axis=0)))
    v = flat[:, k]
    q1 = Q1State(v[0], v[1]).normalized()
    recon = q1.as_vector()[:, None] * (q1.as_vector().conj() @ flat)[None, :]
    if np.linalg.norm(recon - flat) > 1e-8 * np.linalg.norm(flat):
        raise SamplingError("electron and Q1 are entangled; trace out first")
    return q1


def run_electron(
    q1: Q1State,
    pmap: PhaseMap,
    rng: np.random.Generator,
    opts: ProtocolOptions = ProtocolOptions(),
    envelope: np.ndarray | None = None,
) -> tuple[Q1State, RoundOutcome]:
    """One electron passage (pipeline stages 2-10).

    envelope, when given, marks the electron as inelastically scattered:
    the specimen phase is replaced by the envelope multiplication and the
    far-field phase plate by the constrained randomization.
    """
    electron = make_incident(pmap.M, "superposition")
    state = JointState.from_product(electron, q1)
    state = entangle_cnot(state)
    if envelope is None:
        state = apply_specimen(state, pmap, mode=opts.specimen_mode)
    else:
        amps = state.amps * envelope[None]
        nrm = np.linalg.norm(amps)
        if nrm == 0:
            raise SamplingError("envelope annihilated the state")
        state = JointState(amps / nrm, state.M)
    state = qft2d(state)
    if envelope is None and not opts.randomize_all:
        state = phase_plate_step6(state)
    else:
        state, _ = randomize_step6tilde(state, rng, plus_sign=opts.plus_sign_randomization)
    state = split_inverse_qft(state)
    (q2, ntilde, mhat), q1_new = measure(state, "electron_pixels", rng)
    if q2 == 1:
        q1_new = q1_new.swapped()
    return q1_new, RoundOutcome(q2, (ntilde, mhat), q1_new)


def run_round(
    pmap: PhaseMap,
    k: int,
    alpha0: complex,
    opts: ProtocolOptions = ProtocolOptions(),
    rng: np.random.Generator | None = None,
) -> tuple[Q1State, list[RoundOutcome]]:
    """Run k electron passages starting from Q1 = |s> + i alpha0 |a>."""
    if k < 1:
        raise ConfigError("k must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    q1 = Q1State(1.0, 1j * alpha0).normalized()
    outcomes = []
    for _ in range(k):
        q1, rec = run_electron(q1, pmap, rng, opts)
        outcomes.append(rec)
    return q1, outcomes


def pipeline_state_before_pixel_measurement(
    q1: Q1State,
    pmap: PhaseMap,
    opts: ProtocolOptions = ProtocolOptions(),
) -> JointState:
    """Deterministic part of one passage (stages 2-8), for outcome enumeration."""
    electron = make_incident(pmap.M, "superposition")
    state = JointState.from_product(electron, q1)
    state = entangle_cnot(state)
    state = apply_specimen(state, pmap, mode=opts.specimen_mode)
    state = qft2d(state)
    state = phase_plate_step6(state)
    return split_inverse_qft(state)


def reference_filters(pmap: PhaseMap):
    """Target component theta-bar and the two filtered maps of the specimen.

    theta_bar = (1/M^2) sum (-1)^n theta_{n,m} is the quantity one round
    accumulates onto Q1.  theta_L and theta_H are the x-compressed
    low-pass / high-pass maps on the half grid n in [-M/4, M/4),
    m in [-M/2, M/2) that enter the per-outcome Q1 coefficients:

      theta_X[n, m] = (1/M) sum_{r' in [-M/4, M/4), s} Theta[r' + off, s]
                      e^{-2 pi i (2 r' n + s m)/M},

    with off = 0 (low) or M/2 (high) and the (r', s) = (0, 0) term
    excluded from both sums.
    """
    theta = pmap.theta
    M = pmap.M
    n, _ = _index_grids(M)
    theta_bar = float(np.sum(np.where(n % 2 == 0, 1.0, -1.0) * theta) / M**2)
    big_theta = centered_dft2(theta.astype(complex))  # Theta_{r,s}, unitary 1/M
    c = M // 2
    q = M // 4
    low = big_theta[c - q : c + q, :].copy()
    low[q, c] = 0.0  # (r', s) = (0, 0)
    high = np.roll(big_theta, -c, axis=0)[c - q : c + q, :].copy()
    high[q, c] = 0.0
    # inverse transform with kernel e^{-2 pi i (2 r' n + s m)/M} and 1/M
    # normalization: unitary along each axis is 1/sqrt(M/2), 1/sqrt(M);
    # rescale to match the 1/M definition.
    scale = math.sqrt(M / 2) * math.sqrt(M) / M
    theta_l = _cdft(_cdft(low, -1, -1), -2, -1) * scale
    theta_h = _cdft(_cdft(high, -1, -1), -2, -1) * scale
    return theta_bar, theta_l, theta_h


def expected_q1_coefficients(alpha: complex, theta_bar: float, theta_l, theta_h):
    """First-order per-outcome Q1 coefficients (C_s, C_a) with Q1 = C_s|s> + i C_a|a>."""
    c_s = 1.0 - alpha * theta_bar + theta_l + 1j * alpha * theta_h
    c_a = alpha + theta_bar + alpha * theta_l - 1j * theta_h
    return c_s, c_a


def shifted_array_recovery(measurements: Sequence[tuple[float, bool, float]]):
    """Recover (A, phi) of the pi/sigma specimen component from shifted scans.

    Each measurement is (delta, half_shift, theta_bar) with
    theta_bar = A cos(phi + delta) on the unshifted grid and
    theta_bar = -A sin(phi + delta) on the half-pitch-shifted grid.
    Linear least squares in (A cos phi, A sin phi).
    """
    if len(measurements) < 2:
        raise FitError("need at least two measurements")
    rows, rhs = [], []
    for delta, half_shift, tb in measurements:
        if half_shift:
            rows.append([-math.sin(delta), -math.cos(delta)])
        else:
            rows.append([math.cos(delta), -math.sin(delta)])
        rhs.append(tb)
    m = np.asarray(rows)
    if np.linalg.matrix_rank(m, tol=1e-12) < 2:
        raise FitError("shift set does not determine amplitude and phase")
    (u, v), *_ = np.linalg.lstsq(m, np.asarray(rhs), rcond=None)
    return float(math.hypot(u, v)), float(math.atan2(v, u))


# ---------------------------------------------------------------------------
# Two-pixel entangled-measurement reference (the scheme this protocol
# generalizes), used as an exact oracle for the accumulated-phase statistics.


def eeem_qubit_after_rounds(k: int, delta: float, basis: str = "01") -> np.ndarray:
    """Statevector qubit state after k entangled passages at phase difference delta.

    basis = "01" runs the computational-basis description (CNOT on the
    electron, phase e^{-+ i delta/2} on |0>/|1>, electron measured in s/a
    with a Z correction on the a outcome); basis = "sa" runs the same
    physics written in the s/a description (CNOT on the qubit, symmetric
    scattering mixing |s> and |a>).  Both give the identical qubit state;
    the measurement branches are averaged exactly since the corrected
    post-measurement states coincide.
    """
    if basis not in ("01", "sa"):
        raise ConfigError("basis must be '01' or 'sa'")
    inv2 = 1.0 / math.sqrt(2)
    qubit = np.array([inv2, inv2], dtype=complex)  # (|0>+|1>)/sqrt(2)
    for _ in range(k):
        if basis == "01":
            # joint = electron (axis 0, basis 0/1) x qubit (axis 1, basis 0/1)
            joint = np.zeros((2, 2), dtype=complex)
            joint[0, :] = qubit
            # CNOT: flip electron iff qubit is |1>
            joint[:, 1] = joint[::-1, 1]
            # specimen phases
            joint[0, :] *= np.exp(-0.5j * delta)
            joint[1, :] *= np.exp(+0.5j * delta)
            # project electron on |s> = (|0>+|1>)/sqrt(2); Z-correct the
            # |a> branch, which yields the same qubit state
            qubit_s = (joint[0, :] + joint[1, :]) * inv2
            qubit_a = (joint[0, :] - joint[1, :]) * inv2
            qubit_a[1] *= -1.0
            p_s = np.vdot(qubit_s, qubit_s).real
            qubit = qubit_s / math.sqrt(p_s) if p_s >= 0.5 else qubit_a / np.linalg.norm(qubit_a)
        else:
            # s/a description: qubit (c_s, c_a); electron starts in
            # (|s>+|a>)/sqrt(2); CNOT flips the qubit on the |a> branch
            c = np.array([[qubit[0] + qubit[1], qubit[0] - qubit[1]]]) * 0.5
            joint = np.zeros((2, 2), dtype=complex)  # electron s/a x qubit s/a
            joint[0, :] = c * math.sqrt(2)
            joint[1, :] = joint[0, ::-1]
            joint *= inv2
            # scattering: |s> -> cos(d/2)|s> - i sin(d/2)|a>, and symmetrically
            cd, sd = math.cos(delta / 2), math.sin(delta / 2)
            scat = np.array([[cd, -1j * sd], [-1j * sd, cd]])
            joint = scat @ joint
            q_s = joint[0, :]
            q_a = joint[1, ::-1]  # s<->a correction on the a outcome
            p_s = np.vdot(q_s, q_s).real
            sa = q_s / math.sqrt(p_s) if p_s >= 0.5 else q_a / np.linalg.norm(q_a)
            qubit = np.array([sa[0] + sa[1], sa[0] - sa[1]]) * inv2
    return qubit


def eeem_p_up(k: int, delta: float, basis: str = "01") -> float:
    """Exact up-outcome probability of the two-pixel reference protocol."""
    qubit = eeem_qubit_after_rounds(k, delta, basis=basis)
    up = np.array([1.0, 1j], dtype=complex) / math.sqrt(2)
    return float(abs(np.vdot(up, qubit)) ** 2)
