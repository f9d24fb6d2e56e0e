"""Specimen phase maps from atomic coordinates and synthetic noisy images.

The projection route: each atom contributes its forward scattering
amplitude, spread by a 0.1 nm Gaussian, to a projected amplitude-density
grid; the phase map is the electron wavelength times that density.  Noisy
images add a Fourier-colored Gaussian field whose radial amplitude is the
phase-noise spectrum of the chosen imaging mode, then band-pass for
display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .isn_analysis import NoiseSpectrum
from .physics import BeamModel

# LDA ice density and the water molecular mass; both only feed the mean
# inner potential of the background.
ICE_DENSITY_KG_M3 = 930.0
WATER_MASS_U = 18.015
ATOMIC_MASS_KG = 1.660_539_066_60e-27
# m_e * e / (2 pi hbar^2) in nm^-1 per (V nm^3); converts inner potential
# times volume to a forward scattering amplitude.
SCATTERING_PER_POTENTIAL_NM = 2.088_521_6

INNER_POTENTIAL_V_NM3 = {"H": 0.0253, "C": 0.118, "N": 0.106, "O": 0.095, "S": 0.246}
ATOMIC_RADIUS_NM = {"H": 0.0, "C": 0.180, "N": 0.164, "O": 0.144, "S": 0.177}


@dataclass(frozen=True)
class Atom:
    element: str
    x_nm: float
    y_nm: float
    z_nm: float
    residue: str | None = None


@dataclass(frozen=True)
class ElementTable:
    """Per-element inner potentials, mask radii, and scattering amplitudes."""

    inner_potential_Vnm3: dict
    radius_nm: dict
    scattering_amplitude_nm: dict

    @classmethod
    def for_beam(cls, beam: BeamModel) -> "ElementTable":
        """Invert V_i = (2 pi hbar^2 / m_e e) f(0) / gamma for each element."""
        f = {
            el: v * beam.gamma * SCATTERING_PER_POTENTIAL_NM
            for el, v in INNER_POTENTIAL_V_NM3.items()
        }
        return cls(dict(INNER_POTENTIAL_V_NM3), dict(ATOMIC_RADIUS_NM), f)


@dataclass
class PixelImage:
    """Square real-valued image with a physical pixel size."""

    data: np.ndarray
    pixel_nm: float = 0.05

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ConfigError("image must be square")
        if self.data.shape[0] % 2:
            raise ConfigError("image dimension must be even")
        if self.pixel_nm <= 0:
            raise ConfigError("pixel size must be positive")

    @property
    def n(self) -> int:
        return self.data.shape[0]


def _beta_grid(n: int, pixel_nm: float, wavelength_nm: float) -> np.ndarray:
    """Scattering angle |beta| = lambda q / 2 pi at each FFT pixel."""
    f = np.fft.fftfreq(n, d=pixel_nm)
    qx, qy = np.meshgrid(2 * math.pi * f, 2 * math.pi * f, indexing="ij")
    return wavelength_nm * np.hypot(qx, qy) / (2 * math.pi)


def phase_map_from_atoms(
    atoms: list[Atom],
    table: ElementTable,
    beam: BeamModel,
    n_pixels: int = 240,
    pixel_nm: float = 0.05,
    smear_sigma_nm: float = 0.1,
    hydrogen_multipliers: dict | None = None,
    water_background: bool = False,
    ice_thickness_nm: float = 0.0,
) -> PixelImage:
    """Projected weak-phase map theta(x, y) of an atom list.

    Each atom deposits f_el (plus any hydrogen augmentation) under a
    normalized Gaussian of width smear_sigma_nm; theta = lambda times the
    resulting areal density.  Explicit H atoms switch the augmentation
    multipliers off.  With water_background, a uniform ice phase for the
    given thickness is added outside the projected molecular mask built
    from the table radii.  The output is mean-subtracted.
    """
    grid = np.zeros((n_pixels, n_pixels))
    centers = (np.arange(n_pixels) - n_pixels / 2 + 0.5) * pixel_nm
    half_extent = n_pixels * pixel_nm / 2
    has_explicit_h = any(a.element == "H" for a in atoms)
    mult = {} if (hydrogen_multipliers is None or has_explicit_h) else hydrogen_multipliers
    window = max(1, int(math.ceil(5 * smear_sigma_nm / pixel_nm)))
    f_h = table.scattering_amplitude_nm["H"]
    mask = np.zeros((n_pixels, n_pixels), dtype=bool)
    for atom in atoms:
        if atom.element not in table.scattering_amplitude_nm:
            raise ConfigError(f"unsupported element {atom.element!r}")
        if not (abs(atom.x_nm) < half_extent and abs(atom.y_nm) < half_extent):
            raise ConfigError("atom outside the grid footprint")
        f = table.scattering_amplitude_nm[atom.element] + mult.get(atom.element, 0.0) * f_h
        ic = int(round(atom.x_nm / pixel_nm + n_pixels / 2 - 0.5))
        jc = int(round(atom.y_nm / pixel_nm + n_pixels / 2 - 0.5))
        i0, i1 = max(ic - window, 0), min(ic + window + 1, n_pixels)
        j0, j1 = max(jc - window, 0), min(jc + window + 1, n_pixels)
        gx = np.exp(-((centers[i0:i1] - atom.x_nm) ** 2) / (2 * smear_sigma_nm**2))
        gy = np.exp(-((centers[j0:j1] - atom.y_nm) ** 2) / (2 * smear_sigma_nm**2))
        grid[i0:i1, j0:j1] += f / (2 * math.pi * smear_sigma_nm**2) * np.outer(gx, gy)
        if water_background:
            r = table.radius_nm.get(atom.element, 0.0)
            if r > 0:
                d2 = (centers[i0:i1, None] - atom.x_nm) ** 2 + (
                    centers[None, j0:j1] - atom.y_nm
                ) ** 2
                mask[i0:i1, j0:j1] |= d2 <= r * r
    theta = beam.wavelength_nm * grid
    if water_background and ice_thickness_nm > 0:
        f_per_volume = (2 * table.scattering_amplitude_nm["H"] + table.scattering_amplitude_nm["O"]) / water_volume_nm3()
        theta_ice = beam.wavelength_nm * f_per_volume * ice_thickness_nm
        theta = theta + theta_ice * (~mask)
    return PixelImage(theta - theta.mean(), pixel_nm)


def water_volume_nm3() -> float:
    """Molecular volume of water in low-density amorphous ice."""
    return WATER_MASS_U * ATOMIC_MASS_KG / ICE_DENSITY_KG_M3 * 1e27


def mean_ice_potential(table: ElementTable) -> float:
    """(2 V_H + V_O) / v_water, the mean inner potential of ice in volts."""
    v = 2 * table.inner_potential_Vnm3["H"] + table.inner_potential_Vnm3["O"]
    return v / water_volume_nm3()


def molecule_area(occupancy, pixel_nm: float) -> float:
    """Area of pixels whose projected occupancy is strictly positive.

    occupancy is a boolean or numeric grid, either (nz, nx, ny) or already
    projected (nx, ny); True / nonzero marks the inside of the molecule.
    The strict inequality realizes the left-continuous step (empty columns
    contribute nothing).
    """
    occ = np.asarray(occupancy)
    if occ.ndim == 3:
        occ = occ.sum(axis=0)
    elif occ.ndim != 2:
        raise ConfigError("occupancy grid must be 2-D or 3-D")
    return float(np.count_nonzero(occ > 0) * pixel_nm**2)


@dataclass(frozen=True)
class RadialSpectrum:
    q_per_nm: np.ndarray
    power: np.ndarray       # radially averaged |Theta(q)|^2, continuous-FT units
    psd: np.ndarray         # power per unit specimen area
    counts: np.ndarray = field(repr=False, default=None)


def radial_power_spectrum(img: PixelImage) -> RadialSpectrum:
    """Radially averaged power spectrum of an image.

    The continuous-transform convention Theta(q) = sum theta e^{-i q r} l^2
    is used, binned with one reciprocal pixel (2 pi / (N l)) per bin; the
    PSD column divides by the grid area, so summing psd * counts / (N l)^2
    over bins returns the image variance (Parseval).
    """
    n = img.n
    l = img.pixel_nm
    ft = np.fft.fft2(img.data) * l**2
    power2d = np.abs(ft) ** 2
    f = np.fft.fftfreq(n, d=l)
    qx, qy = np.meshgrid(2 * math.pi * f, 2 * math.pi * f, indexing="ij")
    qr = np.hypot(qx, qy)
    dq = 2 * math.pi / (n * l)
    bins = np.round(qr / dq).astype(int)
    nbins = bins.max() + 1
    counts = np.bincount(bins.ravel(), minlength=nbins)
    sums = np.bincount(bins.ravel(), weights=power2d.ravel(), minlength=nbins)
    power = sums / np.maximum(counts, 1)
    q = np.arange(nbins) * dq
    area = (n * l) ** 2
    return RadialSpectrum(q_per_nm=q, power=power, psd=power / area, counts=counts)


def guinier_fit(spec: RadialSpectrum, q_max: float, q_min: float = 0.0):
    """Fit ln(power) = ln(Sigma0) - R_g^2 q^2 / 3 over [q_min, q_max].

    Returns (Sigma0, R_g).
    """
    sel = (spec.q_per_nm > q_min) & (spec.q_per_nm <= q_max) & (spec.power > 0)
    if np.count_nonzero(sel) < 2:
        raise ValueError("not enough bins in the fit range")
    x = spec.q_per_nm[sel] ** 2
    y = np.log(spec.power[sel])
    slope, intercept = np.polyfit(x, y, 1)
    return float(math.exp(intercept)), float(math.sqrt(max(-3.0 * slope, 0.0)))


def b_factor_fit(spec: RadialSpectrum, q_min: float, q_max: float) -> float:
    """High-q damage-style fit power ~ e^{-(B/2)(q/2pi)^2}; returns B in nm^2."""
    sel = (spec.q_per_nm >= q_min) & (spec.q_per_nm <= q_max) & (spec.power > 0)
    if np.count_nonzero(sel) < 2:
        raise ValueError("not enough bins in the fit range")
    x = (spec.q_per_nm[sel] / (2 * math.pi)) ** 2
    y = np.log(spec.power[sel])
    slope, _ = np.polyfit(x, y, 1)
    return float(-2.0 * slope)


def synthesize_noise(
    spec: NoiseSpectrum,
    n_pixels: int,
    pixel_nm: float,
    wavelength_nm: float,
    rng: np.random.Generator | int,
) -> PixelImage:
    """Fourier-colored Gaussian noise field with radial amplitude spec.

    Pipeline: unit white Gaussian field -> FFT -> multiply the noise
    amplitude at each pixel's scattering angle -> inverse FFT, real part.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    white = rng.standard_normal((n_pixels, n_pixels))
    beta = _beta_grid(n_pixels, pixel_nm, wavelength_nm)
    colored = np.fft.ifft2(np.fft.fft2(white) * spec.amplitude(beta)).real
    return PixelImage(colored, pixel_nm)


def bandpass(
    img: PixelImage,
    wavelength_nm: float,
    beta_L: float = 2e-3,
    beta_H: float = 3.5e-3,
) -> PixelImage:
    """Fourier filter e^{-beta^2/2 beta_H^2} (1 - e^{-beta^2/2 beta_L^2}).

    The DC gain is exactly zero.
    """
    if beta_L <= 0 or beta_H <= 0:
        raise ConfigError("band edges must be positive")
    beta = _beta_grid(img.n, img.pixel_nm, wavelength_nm)
    filt = np.exp(-(beta**2) / (2 * beta_H**2)) * (1.0 - np.exp(-(beta**2) / (2 * beta_L**2)))
    out = np.fft.ifft2(np.fft.fft2(img.data) * filt).real
    return PixelImage(out, img.pixel_nm)


FIGURE3_CASES = ("a", "b", "c", "d", "e", "f")


def render_figure3(
    pmap: PixelImage,
    spectra: dict[str, NoiseSpectrum | None],
    wavelength_nm: float,
    seed: int,
    beta_L: float = 2e-3,
    beta_H: float = 3.5e-3,
    crop: tuple[int, int] | None = (80, 200),
) -> dict[str, PixelImage]:
    """Six-panel image set: zero-noise plus one panel per noise spectrum.

    Every panel reuses the white field of the given seed, so panels differ
    only through their spectral multipliers.  Each panel is the band-passed
    sum of the phase map and its noise field, center-cropped for display.
    """
    out = {}
    for case, spec in spectra.items():
        if spec is None:
            total = pmap
        else:
            noise = synthesize_noise(spec, pmap.n, pmap.pixel_nm, wavelength_nm, seed)
            total = PixelImage(pmap.data + noise.data, pmap.pixel_nm)
        filtered = bandpass(total, wavelength_nm, beta_L, beta_H)
        out[case] = filtered
    if crop is not None:
        rows, cols = crop
        out = {case: _center_crop(img, rows, cols) for case, img in out.items()}
    return out


def _center_crop(img: PixelImage, rows: int, cols: int) -> PixelImage:
    n = img.n
    r0 = (n - rows) // 2
    c0 = (n - cols) // 2
    data = img.data[r0 : r0 + rows, c0 : c0 + cols]
    return CroppedImage(data, img.pixel_nm)


@dataclass
class CroppedImage:
    """Rectangular crop of a PixelImage (display only)."""

    data: np.ndarray
    pixel_nm: float


def contrast_bounds(data: np.ndarray, n_sigma: float = 5.0) -> tuple[float, float]:
    """Display range mean +- n_sigma standard deviations."""
    mu = float(np.mean(data))
    sd = float(np.std(data))
    return mu - n_sigma * sd, mu + n_sigma * sd
