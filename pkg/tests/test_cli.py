import argparse
import csv

import pytest

from swarmlink.cli import build_parser, main, resolve_config
from swarmlink.model import ExperimentConfig

ROOT = __import__("pathlib").Path(__file__).resolve().parents[1]


def test_validate_table_config():
    assert main(["validate", "--config", str(ROOT / "configs" / "table1.json")]) == 0


def test_validate_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    ExperimentConfig().replace(safe_distance=1.8).save(path)
    assert main(["validate", "--config", str(path)]) == 1
    assert "safe_distance" in capsys.readouterr().err


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["validate"])
    assert exc.value.code == 2


def test_unknown_flag_is_an_error():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--seeed", "3"])
    assert exc.value.code == 2


def test_run_twice_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["run", "--seed", "7", "--max-steps", "300", "--out", str(out)]) == 0
        outs.append(out)
    for name in ("nominal_seed7.csv", "nominal_seed7.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_failed_mission_exits_zero(tmp_path, capsys):
    assert main(["run", "--max-steps", "10", "--out", str(tmp_path)]) == 0
    assert "failure" in capsys.readouterr().out
    assert '"success": false' in (tmp_path / "nominal_seed0.json").read_text()


def test_sweep_file_accounting(tmp_path):
    n_seeds = 2
    code = main(["sweep", "--n-seeds", str(n_seeds), "--max-steps", "40", "--out", str(tmp_path), "--workers", "1"])
    assert code == 0
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    runs = [p for p in tmp_path.glob("*_seed*.csv")]
    assert len(runs) == 4 * n_seeds
    assert sorted(p.name for p in runs)[0] == "n20_l1_seed0.csv"


def test_baseline_prints_steps(capsys):
    assert main(["baseline", "--seed", "0"]) == 0
    assert int(capsys.readouterr().out) > 0


def _args(argv):
    return build_parser().parse_args(argv)


@pytest.mark.parametrize(
    "flag, field, value",
    [
        ("--n-robots", "n_robots", 33),
        ("--links", "links_per_target", 3),
        ("--failure-prob", "failure_probability", 0.25),
        ("--max-steps", "max_steps", 77),
        ("--sample-every", "sample_every", 5),
        ("--out", "output_dir", "elsewhere"),
    ],
)
def test_flag_over_file_over_default(tmp_path, flag, field, value):
    default = getattr(ExperimentConfig(), field)
    from_file = {"n_robots": 30, "links_per_target": 2, "failure_probability": 0.5, "max_steps": 99,
                 "sample_every": 3, "output_dir": "filedir"}[field]
    path = tmp_path / "c.json"
    ExperimentConfig().replace(**{field: from_file}).save(path)
    assert getattr(resolve_config(_args(["run"])), field) == default
    assert getattr(resolve_config(_args(["run", "--config", str(path)])), field) == from_file
    cfg = resolve_config(_args(["run", "--config", str(path), flag, str(value)]))
    assert getattr(cfg, field) == value


def test_parser_namespace_has_every_documented_flag():
    args = _args(["sweep", "--config", "x", "--n-robots", "1", "--links", "1", "--failure-prob", "0",
                  "--max-steps", "1", "--out", "d", "--sample-every", "1"])
    assert isinstance(args, argparse.Namespace)
    run_args = _args(["run", "--seed", "3"])
    assert run_args.seed == 3
