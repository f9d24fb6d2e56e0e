"""Command-line surface: reproducible experiments with seeded determinism.

Subcommands: constants | fig2 | fig3 | protocol | baselines | mu-curve.
Every command accepts --profile/--config/--set overrides and writes a
manifest (config hash, package versions, seed) beside its outputs.
Exit codes: 0 ok, 2 config error, 3 numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, FitError, NumericError, SamplingError
from . import classical_baselines as cb
from . import fileio
from . import imaging
from . import inelastic_sim as isim
from . import isn_analysis as isn
from . import physics
from . import qsim

PROFILES = {
    "paper-defaults": {
        "E_K": 300e3,       # beam kinetic energy, eV
        "E": 20.0,          # fixed energy loss, eV
        "Lambda": 300.0,    # inelastic mean free path, nm
        "t": 30.0,          # specimen thickness, nm
        "R": 7e-4,          # damage constant, nm^4
        "zeta": 0.064,      # dose-budget fraction
        "M": 16,            # protocol grid size
        "sigma": 0.5,       # beam pitch / resolution, nm
        "beta_L": 2e-3,     # band-pass low edge, rad
        "beta_H": 3.5e-3,   # band-pass high edge, rad
        "grid": 240,        # image pixels per side
        "pixel": 0.05,      # image pixel size, nm
    }
}

_KEY_TYPES = {
    "E_K": float, "E": float, "Lambda": float, "t": float, "R": float,
    "zeta": float, "M": int, "sigma": float, "beta_L": float, "beta_H": float,
    "grid": int, "pixel": float,
}


@dataclass
class RunConfig:
    profile: str = "paper-defaults"
    seed: int = 0
    output_dir: Path = Path(".")
    overrides: dict = field(default_factory=dict)

    def values(self) -> dict:
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        merged = dict(PROFILES[self.profile])
        merged.update(self.overrides)
        return merged

    def beam(self) -> physics.BeamModel:
        v = self.values()
        return physics.make_beam(v["E_K"], v["E"], v["Lambda"])

    def dose(self) -> physics.DoseModel:
        v = self.values()
        return physics.DoseModel(damage_R_nm4=v["R"], zeta=v["zeta"])


def _coerce(key: str, raw: str):
    if key not in _KEY_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    try:
        value = _KEY_TYPES[key](float(raw)) if _KEY_TYPES[key] is int else float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key}={raw!r}") from exc
    _validate_value(key, value)
    return value


def _validate_value(key, value):
    positive = {"E_K", "Lambda", "t", "R", "zeta", "sigma", "beta_L", "beta_H", "pixel"}
    if key in positive and value <= 0:
        raise ConfigError(f"{key} must be positive")
    if key == "E" and value < 0:
        raise ConfigError("E must be non-negative")
    if key == "M" and (value < 4 or value & (value - 1)):
        raise ConfigError("M must be a power of 2 and at least 4")
    if key == "grid" and (value < 2 or value % 2):
        raise ConfigError("grid must be even and at least 2")


def parse_config_file(path) -> dict:
    """Flat key=value lines; # starts a comment."""
    overrides = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        overrides[key] = _coerce(key, raw)
    return overrides


def build_config(args) -> RunConfig:
    overrides = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        overrides[key] = _coerce(key, raw)
    cfg = RunConfig(
        profile=args.profile,
        seed=args.seed,
        output_dir=Path(args.out),
        overrides=overrides,
    )
    cfg.values()  # validate the profile now
    return cfg


def _config_hash(cfg: RunConfig) -> str:
    blob = json.dumps({"values": cfg.values(), "seed": cfg.seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _write_manifest(cfg: RunConfig, name: str) -> None:
    versions = {"qemsim": __version__, "numpy": np.__version__}
    fileio.write_manifest(
        cfg.output_dir / f"{name}.manifest.json",
        {k: v for k, v in cfg.values().items()},
        cfg.seed,
        versions,
        _config_hash(cfg),
    )


def cmd_constants(cfg: RunConfig, args) -> int:
    beam = cfg.beam()
    dose = cfg.dose()
    beta_opt, zeta = physics.solve_zeta()
    xi, cos_xi, xi_sq = isn.solve_xi()
    rows = [
        ("wavelength_pm", beam.wavelength_nm * 1e3, 1.97),
        ("gamma", beam.gamma, 1.587),
        ("theta_E_urad", physics.theta_E(beam) * 1e6, 41.0),
        ("theta_c_mrad", physics.bethe_ridge_angle(beam) * 1e3, 7.2),
        ("beta_opt", beta_opt, 1.26),
        ("zeta", zeta, 0.064),
        ("xi", xi, 0.86),
        ("cos_xi", cos_xi, 0.65),
        ("inv_cos2_xi", 1 / cos_xi**2, 2.35),
        ("N_sq_sigma1nm", physics.dose_budget_nsq(1.0, dose), 2.3e3),
        ("classical_noise_1mrad",
         isn.make_noise_spectrum("classical", cfg.values()["t"], beam, dose)
         .amplitude(1e-3).item(), 1 / 186),
    ]
    if args.json:
        payload = {
            "values": {name: value for name, value, _ in rows},
            "reference": {name: ref for name, _, ref in rows},
            "config": cfg.values(),
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"{'quantity':<24}{'computed':>16}{'reference':>14}")
        for name, value, ref in rows:
            print(f"{name:<24}{value:>16.6g}{ref:>14.6g}")
    return 0


def cmd_fig2(cfg: RunConfig, args) -> int:
    beam = cfg.beam()
    dose = cfg.dose()
    betas = np.linspace(args.beta_min, args.beta_max, args.n_beta) * 1e-3
    table = isn.figure2_curves(betas, args.ratios, beam, dose)
    header = list(table.keys())
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "fig2.csv"
    fileio.write_csv(out, header, [table[k] for k in header])
    _write_manifest(cfg, "fig2")
    print(f"wrote {out}")
    return 0


def _figure3_spectra(cfg: RunConfig, beam, dose):
    v = cfg.values()
    lam_over_t = (10.0, 5.0)
    spectra = {"a": None, "b": isn.make_noise_spectrum("classical", v["t"], beam, dose)}
    for case_qem, case_isn, ratio in (("c", "d", lam_over_t[0]), ("e", "f", lam_over_t[1])):
        t_nm = beam.mean_free_path_nm / ratio
        spectra[case_qem] = isn.make_noise_spectrum("qem", t_nm, beam, dose)
        spectra[case_isn] = isn.make_noise_spectrum("qem_isn", t_nm, beam, dose)
    return spectra


def cmd_fig3(cfg: RunConfig, args) -> int:
    v = cfg.values()
    beam = cfg.beam()
    dose = cfg.dose()
    if args.map:
        pm = fileio.load_phase_map(args.map, weak_phase_limit=None)
        img = imaging.PixelImage(pm.theta, pm.pitch_nm)
    elif args.atoms:
        atoms = fileio.read_atoms(args.atoms)
        table = imaging.ElementTable.for_beam(beam)
        img = imaging.phase_map_from_atoms(
            atoms, table, beam, n_pixels=v["grid"], pixel_nm=v["pixel"]
        )
    else:
        raise ConfigError("fig3 needs --map or --atoms")
    spectra = _figure3_spectra(cfg, beam, dose)
    panels = imaging.render_figure3(
        img, spectra, beam.wavelength_nm, cfg.seed,
        beta_L=v["beta_L"], beta_H=v["beta_H"],
        crop=None if args.no_crop else (args.crop_rows, args.crop_cols),
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    for case, panel in panels.items():
        vmin, vmax = imaging.contrast_bounds(panel.data)
        fileio.write_pgm(cfg.output_dir / f"fig3{case}.pgm", panel.data, vmin, vmax)
        np.savetxt(cfg.output_dir / f"fig3{case}.csv", panel.data, delimiter=",")
    _write_manifest(cfg, "fig3")
    print(f"wrote {len(panels)} panels to {cfg.output_dir}")
    return 0


def cmd_protocol(cfg: RunConfig, args) -> int:
    v = cfg.values()
    beam = cfg.beam()
    rng = np.random.default_rng(cfg.seed)
    M = v["M"]
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    # accumulated-phase sweep on a pure target-component specimen
    n = np.arange(M) - M // 2
    theta = args.theta_bar * np.where(n[:, None] % 2 == 0, 1.0, -1.0) * np.ones((M, M))
    pmap = qsim.PhaseMap.from_array(theta, v["sigma"])
    ups = 0
    log_rows = []
    for rnd in range(args.rounds):
        q1, outcomes = qsim.run_round(pmap, args.k, 0.0, rng=rng)
        if rng.random() < qsim.q1_up_probability(q1):
            ups += 1
        if rnd < args.log_rounds:
            for i, rec in enumerate(outcomes):
                log_rows.append((rnd, i, rec.q2_bit, rec.electron_pixel[0], rec.electron_pixel[1]))
    p_up = ups / args.rounds
    alpha_hat = 0.5 - p_up
    expected = 0.5 * math.sin(2 * args.k * args.theta_bar)
    fileio.write_csv(
        cfg.output_dir / "protocol_rounds.csv",
        ["round", "electron", "q2", "n_hat", "m_hat"],
        [np.array(c) for c in zip(*log_rows)] if log_rows else [np.array([])] * 5,
        digits=6,
    )
    fileio.write_csv(
        cfg.output_dir / "protocol_summary.csv",
        ["k", "theta_bar", "rounds", "p_up", "alpha_hat", "alpha_expected"],
        [np.array([x]) for x in
         (args.k, args.theta_bar, args.rounds, p_up, alpha_hat, expected)],
    )

    # per-event disturbance sweep versus the analytic stripe estimate
    betas = np.array([float(b) * 1e-3 for b in args.betas.split(",")])
    mu_vals, rms_vals = [], []
    for beta in betas:
        sigma = beam.wavelength_nm / beta
        mu_vals.append(isn.mu_of_beta(beta, beam))
        etas = isim.sample_event_eta(M, sigma, beam, rng, args.isn_trials)
        rms_vals.append(float(np.sqrt(np.mean(etas**2))))
    fileio.write_csv(
        cfg.output_dir / "protocol_isn.csv",
        ["beta_mrad", "mu_analytic", "rms_eta", "ratio"],
        [betas * 1e3, np.array(mu_vals), np.array(rms_vals),
         np.array(rms_vals) / np.array(mu_vals)],
    )
    _write_manifest(cfg, "protocol")
    print(f"p_up={p_up:.4f} alpha_hat={alpha_hat:.5f} expected={expected:.5f}")
    return 0


def cmd_baselines(cfg: RunConfig, args) -> int:
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for kind in ("in_focus_phase_contrast", "dark_field", "diffraction"):
        scheme = cb.MeasurementScheme(kind, N=args.N)
        ana = cb.variance_analytic(scheme, args.alpha)
        mc = cb.variance_monte_carlo(scheme, args.theta, args.alpha, args.N, args.trials, rng)
        rows.append((kind, args.N, args.alpha, ana, mc, mc / ana))
    scheme = cb.MeasurementScheme("discrete_n_pixel", N=args.N, n_pixels=2)
    ana = cb.variance_analytic(scheme, args.alpha)
    rows.append(("discrete_n2", args.N, args.alpha, ana, ana, 1.0))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "baselines.csv"
    with open(out, "w") as fh:
        fh.write("scheme,N,alpha,analytic,mc,ratio\n")
        for kind, n, a, ana, mc, ratio in rows:
            fh.write(f"{kind},{n},{fileio.format_sig(a)},{fileio.format_sig(ana)},"
                     f"{fileio.format_sig(mc)},{fileio.format_sig(ratio)}\n")
    _write_manifest(cfg, "baselines")
    print(f"wrote {out}")
    return 0


def cmd_mu_curve(cfg: RunConfig, args) -> int:
    beam = cfg.beam()
    betas = np.linspace(args.beta_min, args.beta_max, args.n_beta) * 1e-3
    mus = np.array([isn.mu_of_beta(b, beam) for b in betas])
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "mu_curve.csv"
    fileio.write_csv(out, ["beta_mrad", "mu"], [betas * 1e3, mus])
    _write_manifest(cfg, "mu_curve")
    print(f"wrote {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qemsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--profile", default="paper-defaults")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE")

    p = sub.add_parser("constants", help="derived constants against reference values")
    common(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("fig2", help="optimal repetition number versus beta")
    common(p)
    p.add_argument("--beta-min", type=float, default=0.5, help="mrad")
    p.add_argument("--beta-max", type=float, default=20.0, help="mrad")
    p.add_argument("--n-beta", type=int, default=40)
    p.add_argument("--ratios", type=float, nargs="+", default=[10.0, 5.0])
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("fig3", help="six-panel noisy image set")
    common(p)
    p.add_argument("--map", default=None, help="phase-map grid file")
    p.add_argument("--atoms", default=None, help="atom list (text or PDB)")
    p.add_argument("--crop-rows", type=int, default=80)
    p.add_argument("--crop-cols", type=int, default=200)
    p.add_argument("--no-crop", action="store_true")
    p.set_defaults(func=cmd_fig3)

    p = sub.add_parser("protocol", help="statevector protocol sweeps")
    common(p)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--theta-bar", type=float, default=1e-3)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--log-rounds", type=int, default=5)
    p.add_argument("--betas", default="2,4,8", help="mrad, comma separated")
    p.add_argument("--isn-trials", type=int, default=300)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("baselines", help="classical measurement-scheme variances")
    common(p)
    p.add_argument("--N", type=int, default=10**8)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--theta", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=20000)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("mu-curve", help="per-event disturbance versus beta")
    common(p)
    p.add_argument("--beta-min", type=float, default=0.5, help="mrad")
    p.add_argument("--beta-max", type=float, default=25.0, help="mrad")
    p.add_argument("--n-beta", type=int, default=50)
    p.set_defaults(func=cmd_mu_curve)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FitError, SamplingError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
