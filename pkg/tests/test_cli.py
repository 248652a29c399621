import json

import pytest

from dyadiclab.cli import build_parser, main


def test_parser_knows_every_subcommand():
    p = build_parser()
    for cmd in ("verify-identities", "estimate-norm", "complexity-scan", "rwt", "banach-suite", "run"):
        args = p.parse_args([cmd, "--depth", "2"])
        assert args.command == cmd and args.depth == 2


def test_bad_triple_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["estimate-norm", "--triple", "2,2,2"])


def test_estimate_norm_writes_reports(tmp_path, capsys):
    code = main(["estimate-norm", "--depth", "3", "--trials", "6", "--k", "1", "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows"] == 1
    assert (tmp_path / "report.csv").exists() and (tmp_path / "report.json").exists()


def test_verify_identities_exact(capsys):
    assert main(["verify-identities", "--depth", "3", "--trials", "2", "--backend", "exact"]) == 0


def test_complexity_scan_slope_limit(capsys):
    args = ["complexity-scan", "--depth", "3", "--trials", "6", "--complexities", "0", "1"]
    assert main(args + ["--slope-limit", "5"]) == 0
    assert main(args + ["--slope-limit", "-100"]) == 1


def test_run_needs_config(capsys):
    assert main(["run"]) == 2


def test_run_with_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"depth": 3, "experiments": [{"kind": "identities", "seeds": 1}]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "report.csv").exists()
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg)]) == 2
