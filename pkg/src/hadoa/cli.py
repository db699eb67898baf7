"""``hadoa`` command line: validate configs, run sweeps, dump spectra, run a quick demo.

Exit codes: 0 success, 2 configuration error, 3 estimator failure rate above
the configured ceiling, 4 I/O error (for example a missing output directory).
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .array_model import NoiseSpec, generate_snapshots, make_rng
from .config import ConfigError, LoadedConfig, config_to_dict, load_config, validate_loaded
from .covariance import sample_scm, slot_hybrids, toeplitz_reconstruct, entrywise_reconstruct
from .experiments import (DEFAULT_SEED, ExperimentConfig, RmseCurve, curves_csv, had_combiner, scm_plan,
                          sweep_array_rf, sweep_snr, write_curves_svg)
from .frontend import apply_combiner
from .music import beamformer_spectrum, music_spectrum, write_spectrum_csv

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES, EXIT_IO = 0, 2, 3, 4


def tool_version() -> str:
    from . import __version__

    return __version__


def _err(msg: str) -> None:
    print(f"hadoa: {msg}", file=sys.stderr)


def _load(path, args=None, rf_sweep=None) -> LoadedConfig:
    loaded = load_config(path)
    cfg = loaded.config
    changes = {}
    if args is not None:
        if getattr(args, "seed", None) is not None:
            changes["master_seed"] = args.seed
        if getattr(args, "trials", None) is not None:
            if args.trials < 1:
                raise ConfigError("--trials must be >= 1")
            changes["trials"] = args.trials
    if changes:
        loaded = LoadedConfig(cfg.replace(**changes), loaded.path, loaded.lines)
    validate_loaded(loaded, rf_sweep)
    return loaded


def _out_dir(args) -> Path:
    out = Path(args.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    return out


def _manifest(path: Path, loaded: LoadedConfig, out: Path, command: str, outputs: list, wall: float,
              args) -> None:
    data = {
        "command": command,
        "config_path": str(loaded.path),
        "config": config_to_dict(loaded.config),
        "seed": loaded.config.master_seed,
        "jobs": getattr(args, "jobs", 1),
        "output_dir": str(out),
        "outputs": outputs,
        "tool_version": tool_version(),
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "wall_time_seconds": round(wall, 3),
    }
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _failure_excess(curves: Sequence[RmseCurve], ceiling: float) -> Optional[str]:
    for c in curves:
        for x, f in zip(c.x, c.failures):
            if f / c.trials > ceiling:
                return f"{c.method} at x={x:g}: {f}/{c.trials} failed trials exceeds ceiling {ceiling:g}"
    return None


def _sweep(args, kind: str) -> int:
    loaded = _load(args.config, args, rf_sweep=(kind == "sweep-rf"))
    out = _out_dir(args)
    cfg = loaded.config
    t0 = time.perf_counter()
    curves = sweep_snr(cfg, jobs=args.jobs) if kind == "sweep-snr" else sweep_array_rf(cfg, jobs=args.jobs)
    wall = time.perf_counter() - t0
    stem = Path(args.config).stem
    csv_path = out / f"{stem}.csv"
    csv_path.write_text(curves_csv(curves))
    outputs = [csv_path.name]
    if args.emit_svg:
        svg = out / f"{stem}.svg"
        write_curves_svg(svg, curves, stem)
        outputs.append(svg.name)
    _manifest(out / f"{stem}.manifest.json", loaded, out, kind, outputs, wall, args)
    print(f"wrote {csv_path} ({len(curves)} curves, {wall:.1f} s)")
    msg = _failure_excess(curves, cfg.failure_ceiling)
    if msg:
        _err(msg)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_validate(args) -> int:
    loaded = _load(args.config, args)
    cfg = loaded.config
    print(f"{args.config}: ok ({', '.join(cfg.methods)}; M={cfg.M}, L={cfg.L}, "
          f"{type(cfg.architecture).__name__})")
    return EXIT_OK


def cmd_sweep_snr(args) -> int:
    return _sweep(args, "sweep-snr")


def cmd_sweep_rf(args) -> int:
    return _sweep(args, "sweep-rf")


def cmd_spectrum(args) -> int:
    """MUSIC spectrum of one trial at the first configured SNR (or ``--snr``)."""
    loaded = _load(args.config, args)
    out = _out_dir(args)
    cfg = loaded.config
    method = args.method or cfg.methods[0]
    if method not in ("fd-music", "had-music", "scm-music"):
        raise ConfigError(f"spectrum supports fd-music, had-music and scm-music, not {method}")
    snr = cfg.snr_db_list[0] if args.snr is None else args.snr
    t0 = time.perf_counter()
    g, K, grid = cfg.geometry, cfg.num_sources, cfg.grid
    noise = NoiseSpec.from_snr_db(snr)
    X = generate_snapshots(g, cfg.scenario(), noise, make_rng(cfg.master_seed, 0, 0))
    if method == "fd-music":
        P = music_spectrum(sample_scm(X), g, K, grid)
    elif method == "had-music":
        c = had_combiner(cfg)
        R = sample_scm(apply_combiner(c, X))
        P = music_spectrum(R, g, K, grid, c) if c.L > K else beamformer_spectrum(R, g, grid, c)
    else:
        plan = scm_plan(cfg)
        hyb = slot_hybrids(plan, X)
        R = toeplitz_reconstruct(plan, hyb) if cfg.recon == "toeplitz" else entrywise_reconstruct(plan, hyb)
        P = music_spectrum(R, g, K, grid)
    stem = Path(args.config).stem
    path = out / f"{stem}_{method}_spectrum.csv"
    write_spectrum_csv(path, grid, P)
    _manifest(out / f"{stem}_{method}_spectrum.manifest.json", loaded, out, "spectrum", [path.name],
              time.perf_counter() - t0, args)
    print(f"wrote {path}")
    return EXIT_OK


def demo_config(seed: int = DEFAULT_SEED, trials: int = 50) -> ExperimentConfig:
    return ExperimentConfig(methods=("fd-music", "scm-music", "had-music"), M=16, L=4, snr_db_list=(0.0, 10.0),
                            trials=trials, master_seed=seed)


def format_table(curves: Sequence[RmseCurve]) -> str:
    xs = curves[0].x
    head = ["method"] + [f"{x:g} dB" for x in xs] + ["failures"]
    rows = [[c.method] + [f"{r:.4f}" for r in c.rmse_deg] + [str(sum(c.failures))] for c in curves]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    fmt = lambda r: "  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def cmd_demo(args) -> int:
    cfg = demo_config(args.seed if args.seed is not None else DEFAULT_SEED, args.trials or 50)
    t0 = time.perf_counter()
    curves = sweep_snr(cfg, jobs=args.jobs)
    print(f"RMSE (deg), M={cfg.M}, L={cfg.L}, sources at {', '.join(f'{a:g}' for a in cfg.angles_deg)} deg, "
          f"N={cfg.num_snapshots}, {cfg.trials} trials")
    print(format_table(curves))
    print(f"({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hadoa", description="DOA estimation with hybrid analog-digital receivers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--seed", type=int, help=f"master seed (default from config, else {DEFAULT_SEED})")
        sp.add_argument("--trials", type=int, help="override the trial count")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        if out:
            sp.add_argument("--out", default=".", help="existing output directory (default .)")
            sp.add_argument("--emit-svg", action="store_true", help="also write an SVG line chart")

    s = sub.add_parser("validate", help="check a config file")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    for name, fn, text in (("sweep-snr", cmd_sweep_snr, "RMSE against SNR"),
                           ("sweep-rf", cmd_sweep_rf, "RMSE against M and L")):
        s = sub.add_parser(name, help=text)
        s.add_argument("config")
        common(s)
        s.set_defaults(func=fn)
    s = sub.add_parser("spectrum", help="dump one MUSIC spectrum as CSV")
    s.add_argument("config")
    s.add_argument("--method", choices=("fd-music", "had-music", "scm-music"))
    s.add_argument("--snr", type=float, help="SNR in dB (default: first configured)")
    common(s)
    s.set_defaults(func=cmd_spectrum)
    s = sub.add_parser("demo", help="quick M=16 comparison table")
    common(s, out=False)
    s.set_defaults(func=cmd_demo)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        _err("--jobs must be >= 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        _err(str(e))
        return EXIT_CONFIG
    except OSError as e:
        _err(str(e))
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
