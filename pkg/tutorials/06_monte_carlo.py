"""Seeded Monte Carlo sweeps and the files the command line writes."""
# %%
import tempfile
from pathlib import Path

from hadoa.cli import main
from hadoa.experiments import ExperimentConfig, curves_csv, sweep_snr

cfg = ExperimentConfig(M=16, L=4, snr_db_list=(-5.0, 5.0), trials=20)
curves = sweep_snr(cfg)
print(curves_csv(curves))

# %% same thing through the command line, with two worker processes
configs = Path(__file__).resolve().parents[1] / "configs"
with tempfile.TemporaryDirectory() as d:
    main(["sweep-snr", str(configs / "snr_sweep.cfg"), "--trials", "2", "--jobs", "2", "--out", d])
    for p in sorted(Path(d).iterdir()):
        print(p.name, p.stat().st_size, "bytes")
