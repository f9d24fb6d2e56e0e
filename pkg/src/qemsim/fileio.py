"""File formats: phase-map grids, PGM images, CSV tables, atom lists."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .imaging import Atom
from .qsim import PhaseMap

PHASEMAP_MAGIC = b"QPM1"
ANGSTROM_PER_NM = 10.0


def save_phase_map_text(path, pmap: PhaseMap) -> None:
    with open(path, "w") as fh:
        fh.write(f"{pmap.M} {pmap.pitch_nm!r}\n")
        np.savetxt(fh, pmap.theta)


def save_phase_map_binary(path, pmap: PhaseMap) -> None:
    with open(path, "wb") as fh:
        fh.write(PHASEMAP_MAGIC)
        fh.write(struct.pack("<qd", pmap.M, pmap.pitch_nm))
        fh.write(np.ascontiguousarray(pmap.theta, dtype="<f8").tobytes())


def load_phase_map(path, weak_phase_limit: float = 0.3) -> PhaseMap:
    """Load either format; the mean is re-subtracted on load."""
    raw = Path(path).read_bytes()
    if raw[:4] == PHASEMAP_MAGIC:
        m, pitch = struct.unpack_from("<qd", raw, 4)
        theta = np.frombuffer(raw, dtype="<f8", offset=4 + 16, count=m * m)
        return PhaseMap.from_array(theta.reshape(m, m), pitch, weak_phase_limit)
    lines = raw.decode().splitlines()
    header = lines[0].split()
    if len(header) != 2:
        raise ConfigError("text phase map must start with 'M pitch_nm'")
    m, pitch = int(header[0]), float(header[1])
    theta = np.loadtxt(lines[1 : m + 1])
    return PhaseMap.from_array(np.atleast_2d(theta), pitch, weak_phase_limit)


def write_pgm(path, data: np.ndarray, vmin: float, vmax: float) -> None:
    """8-bit binary PGM with the given display range."""
    if vmax <= vmin:
        raise ConfigError("empty display range")
    scaled = np.clip((data - vmin) / (vmax - vmin), 0.0, 1.0)
    pixels = (scaled * 255).round().astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(pixels.tobytes())


def format_sig(x, digits: int = 9) -> str:
    return f"{float(x):.{digits - 1}e}"


def write_csv(path, header: list[str], columns: list[np.ndarray], digits: int = 9) -> None:
    """Column-oriented CSV with fixed significant digits."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ConfigError("CSV columns must have equal length")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(format_sig(c[i], digits) for c in cols) + "\n")


def read_atoms_text(path) -> list[Atom]:
    """Whitespace-separated 'element x y z [residue]' records, lengths in nm."""
    atoms = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (4, 5):
            raise ConfigError(f"line {lineno}: expected 'element x y z [residue]'")
        el = parts[0]
        x, y, z = (float(v) for v in parts[1:4])
        atoms.append(Atom(el, x, y, z, parts[4] if len(parts) == 5 else None))
    return atoms


def read_atoms_pdb(path) -> list[Atom]:
    """Minimal PDB reader: ATOM/HETATM records, coordinates converted to nm."""
    atoms = []
    for line in Path(path).read_text().splitlines():
        if not (line.startswith("ATOM") or line.startswith("HETATM")):
            continue
        element = line[76:78].strip() or line[12:16].strip()[:1]
        x = float(line[30:38]) / ANGSTROM_PER_NM
        y = float(line[38:46]) / ANGSTROM_PER_NM
        z = float(line[46:54]) / ANGSTROM_PER_NM
        atoms.append(Atom(element.capitalize() if len(element) > 1 else element.upper(),
                          x, y, z, line[17:20].strip() or None))
    return atoms


def read_atoms(path) -> list[Atom]:
    text = Path(path).read_text()
    if any(l.startswith(("ATOM", "HETATM")) for l in text.splitlines()):
        return read_atoms_pdb(path)
    return read_atoms_text(path)


def write_manifest(path, config: dict, seed, versions: dict, config_hash: str) -> None:
    payload = {
        "config": config,
        "seed": seed,
        "versions": versions,
        "config_hash": config_hash,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
