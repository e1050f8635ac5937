import json

import pytest

from thinning.cli import UsageError, main, parse_config, run_experiment
from thinning.errors import DomainError
from thinning.io import read_csv, read_jsonl


def test_parse_invariance_flags():
    cfg = parse_config(["invariance", "--family", "pd", "--m", "0.5", "--p", "0.3,0.9", "--reps", "2000", "--seed", "7"])
    assert cfg.p == [0.3, 0.9] and cfg.m == [0.5] and cfg.reps == 2000 and cfg.seed == 7
    assert cfg.level == 0.001


def test_missing_seed():
    with pytest.raises(UsageError, match="seed"):
        parse_config(["rem"])
    assert main(["rem"]) == 2


def test_domain_error_for_pd():
    with pytest.raises(DomainError, match=r"\(0,1\)"):
        parse_config(["invariance", "--family", "pd", "--m", "1.5", "--seed", "1"])


def test_config_file(tmp_path):
    doc = tmp_path / "c.yaml"
    doc.write_text("seed: 3\nbeta: [0.5, 2]\nN: 8\nreps: 4\n")
    cfg = parse_config(["rem", "--config", str(doc), "--reps", "6"])
    assert cfg.beta == [0.5, 2.0] and cfg.N == [8] and cfg.reps == 6 and cfg.seed == 3
    doc.write_text("seed: 3\nbogus_key: 1\n")
    with pytest.raises(UsageError, match="bogus_key"):
        parse_config(["rem", "--config", str(doc)])


def test_rem_outputs(tmp_path):
    out = tmp_path / "rem"
    code = main(["rem", "--beta", "0.5,1,2", "--N", "10", "--reps", "8", "--seed", "1", "--out", str(out), "--emit-plots"])
    rows = read_csv(out / "summary.csv")
    assert list(rows[0]) == ["beta", "N", "estimate", "ci_low", "ci_high", "closed_form"]
    assert len(rows) == 3
    assert list(out.glob("*.svg"))
    assert read_jsonl(out / "report.jsonl")[-1]["kind"] == "summary"
    assert code in (0, 1)


def test_two_atom_control_exits_nonzero(tmp_path):
    assert main(["invariance", "--family", "two-atom", "--p", "0.5", "--reps", "500", "--seed", "2", "--out", str(tmp_path)]) == 1
    summary = read_jsonl(tmp_path / "report.jsonl")[-1]
    assert summary["status"] == "fail" and summary["failed"]


def test_small_pd_invariance_exits_zero(tmp_path):
    code = main(["invariance", "--m", "0.5", "--p", "0.5", "--reps", "500", "--atoms", "2000", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0


def test_sample_and_thin_records(tmp_path):
    for cmd in ("sample", "thin"):
        out = tmp_path / cmd
        assert main([cmd, "--family", "gaps", "--m", "1", "--reps", "3", "--n", "5", "--seed", "4", "--out", str(out)]) == 0
        recs = read_jsonl(out / "report.jsonl")
        assert len(recs[0]["gaps"]) == 5


def test_stdout_summary_is_json(tmp_path, capsys):
    main(["steady-state", "--reps", "5", "--L", "10", "--seed", "5", "--out", str(tmp_path)])
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert json.loads(line)["status"] in ("pass", "fail")


def test_run_experiment_is_byte_reproducible(tmp_path):
    blobs = []
    for i, threads in enumerate((1, 3)):
        out = tmp_path / str(i)
        cfg = parse_config(["invariance", "--p", "0.4", "--reps", "500", "--atoms", "1000", "--seed", "9", "--threads", str(threads), "--out", str(out)])
        run_experiment(cfg)
        blobs.append(((out / "report.jsonl").read_bytes(), (out / "summary.csv").read_bytes()))
    assert blobs[0] == blobs[1]
