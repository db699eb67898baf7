import json
from pathlib import Path

import pytest

from hadoa.cli import main
from hadoa.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


SMALL = """[experiment]
methods = fd-music, scm-music, had-music
M = 8
L = 4
snr_db = 0, 10
num_snapshots = 200
trials = 3
"""


def test_validate_bundled_configs(capsys):
    assert main(["validate", str(CONFIGS / "snr_sweep.cfg")]) == 0
    assert main(["validate", str(CONFIGS / "rf_sweep.cfg")]) == 0
    assert main(["validate", str(CONFIGS / "bad_pc.cfg")]) == 2
    err = capsys.readouterr().err
    assert "bad_pc.cfg:6:" in err


def test_validate_reports_rank_deficit(tmp_path, capsys):
    p = write(tmp_path, SMALL + "[scm]\nslots = 1\n")
    assert main(["validate", str(p)]) == 2
    err = capsys.readouterr().err
    assert "rank deficit" in err and "c.cfg:8:" in err


def test_parse_errors_carry_lines(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config("[experiment]\nM = 8\nbogus = 1\n", "x.cfg")
    assert e.value.line == 3
    with pytest.raises(ConfigError) as e:
        parse_config("[experiment]\nM = eight\n", "x.cfg")
    assert e.value.line == 2
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_sweep_writes_csv_and_manifest(tmp_path):
    p = write(tmp_path, SMALL)
    out = tmp_path / "out"
    out.mkdir()
    assert main(["sweep-snr", str(p), "--out", str(out), "--emit-svg"]) == 0
    rows = (out / "c.csv").read_text().splitlines()
    assert rows[0] == "x,method,rmse_deg,failures,trials"
    assert [r.split(",")[1] for r in rows[1:4]] == ["fd-music", "scm-music", "had-music"]
    assert len(rows) == 1 + 3 * 2
    man = json.loads((out / "c.manifest.json").read_text())
    assert man["seed"] == 20250101 and man["config"]["M"] == 8
    assert set(man["outputs"]) == {"c.csv", "c.svg"}
    assert (out / "c.svg").stat().st_size > 0


def test_snr_sweep_config_one_trial(tmp_path):
    assert main(["sweep-snr", str(CONFIGS / "snr_sweep.cfg"), "--trials", "1", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "snr_sweep.csv").read_text().splitlines()[1:]
    assert len(rows) == 15
    for i in range(5):
        assert {r.split(",")[0] for r in rows[3 * i:3 * i + 3]} == {rows[3 * i].split(",")[0]}


def test_same_seed_same_bytes(tmp_path):
    p = write(tmp_path, SMALL)
    outs = []
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        assert main(["sweep-snr", str(p), "--trials", "1", "--seed", "7", "--out", str(tmp_path / d)]) == 0
        outs.append((tmp_path / d / "c.csv").read_bytes())
    assert outs[0] == outs[1]
    (tmp_path / "c").mkdir()
    main(["sweep-snr", str(p), "--trials", "1", "--seed", "8", "--out", str(tmp_path / "c")])
    assert (tmp_path / "c" / "c.csv").read_bytes() != outs[0]


def test_missing_output_directory(tmp_path):
    p = write(tmp_path, SMALL)
    assert main(["sweep-snr", str(p), "--out", str(tmp_path / "nope")]) == 4


def test_config_file_untouched(tmp_path):
    p = write(tmp_path, SMALL)
    before = p.read_bytes()
    main(["sweep-snr", str(p), "--trials", "1", "--seed", "1", "--out", str(tmp_path)])
    assert p.read_bytes() == before


def test_failure_ceiling_exit_code(tmp_path):
    p = write(tmp_path, "[experiment]\nmethods = had-music\nM = 8\nL = 2\nsnr_db = 0\ntrials = 2\n"
                        "num_snapshots = 100\nfailure_ceiling = 0.5\n")
    assert main(["sweep-snr", str(p), "--out", str(tmp_path)]) == 3
    assert (tmp_path / "c.csv").exists()


def test_rf_sweep(tmp_path):
    p = write(tmp_path, "[experiment]\nmethods = scm-music\ntrials = 1\nnum_snapshots = 200\n"
                        "[sweep-rf]\nM = 8\nL = 2, 4\nsnr_db = 10\n")
    assert main(["sweep-rf", str(p), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert [r.split(",")[:2] for r in rows[1:]] == [["2.0", "scm-music:M8"], ["4.0", "scm-music:M8"]]


def test_spectrum(tmp_path):
    p = write(tmp_path, SMALL)
    for m in ("fd-music", "scm-music", "had-music"):
        assert main(["spectrum", str(p), "--method", m, "--out", str(tmp_path)]) == 0
        lines = (tmp_path / f"c_{m}_spectrum.csv").read_text().splitlines()
        assert lines[0].startswith("angle_deg,")
        assert len(lines) > 1000


def test_demo(capsys):
    assert main(["demo", "--trials", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    names = [line.split()[0] for line in out if line.split() and line.split()[0] in
             ("fd-music", "scm-music", "had-music")]
    assert names == ["fd-music", "scm-music", "had-music"]
