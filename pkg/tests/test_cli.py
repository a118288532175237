import csv
import io
import shutil

import pytest

from mdfem.cli import CSV_HEADER, main
from mdfem.config import ConfigError, parse_config

CHEAP = """\
# small randomized study
problem.c = 0.015
problem.sigma = 4
problem.n_terms = 4
weights.nu = 0.05
weights.pstar = 0.5
run.epsilon = 2^-2, 2^-3, 2^-4, 2^-5
run.shifts = 2
run.replications = 5
oracle.quad_degree = 2
oracle.h_fine = 2^-5
output.wall_clock = false
"""


@pytest.fixture
def cheap_cfg(tmp_path):
    p = tmp_path / "cheap.cfg"
    p.write_text(CHEAP)
    return p


def test_parse_config_values():
    cfg = parse_config("run.epsilon = 2^-3, 0.01\nweights.pstar = 0.25  # comment\n\n")
    assert cfg["run.epsilon"] == [0.125, 0.01]
    assert cfg["weights.pstar"] == 0.25
    assert cfg["run.shifts"] == 8  # default untouched


@pytest.mark.parametrize("text", ["bogus.key = 1", "run.bogus = 1", "run.shifts = many",
                                  "no equals sign", "output.wall_clock = maybe"])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_exit_code_config(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("nonsense.key = 3\n")
    assert main(["plan", "--config", str(p)]) == 2
    assert main(["plan", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["plan", "--set", "problem.family=cubic"]) == 2


def test_exit_code_admissibility(capsys):
    assert main(["plan", "--set", "weights.pstar=1"]) == 3
    assert main(["run", "--set", "weights.pstar=0.5", "--set", "run.mode=deterministic",
                 "--set", "problem.n_terms=4"]) == 3


def test_exit_code_numerical(capsys):
    # infinite model has no tensor oracle
    assert main(["study", "--set", "problem.n_terms=none"]) == 4


def test_plan_report(cheap_cfg, capsys):
    assert main(["plan", "--config", str(cheap_cfg)]) == 0
    text = capsys.readouterr().out
    assert "kappa" in text and "mode = randomized" in text
    assert text.count("epsilon =") == 4


def test_study_needs_three_epsilons(cheap_cfg, capsys):
    assert main(["study", "--config", str(cheap_cfg), "--set", "run.epsilon=0.1,0.05"]) == 2


def test_study_rows_and_header(cheap_cfg, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["study", "--config", str(cheap_cfg), "--out", str(out)]) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + 4 * 5
    assert {r[-1] for r in rows[1:]} == {"0", "1", "2", "3", "4"}
    assert all(r[6] == "0" for r in rows[1:])
    for r in rows[1:]:
        assert float(r[3]) == abs(float(r[1]) - float(r[2]))


def test_study_reproducible_across_threads(cheap_cfg, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["study", "--config", str(cheap_cfg), "--seed", "3", "--out", str(a)]) == 0
    assert main(["study", "--config", str(cheap_cfg), "--seed", "3", "--threads", "4",
                 "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_study_stdout(cheap_cfg, capsys):
    assert main(["study", "--config", str(cheap_cfg), "--set", "run.replications=1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 5


def test_baseline_rows(cheap_cfg, tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["baseline", "--config", str(cheap_cfg), "--out", str(out)]) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == CSV_HEADER and len(rows) == 5
    assert all(r[7] == r[8] for r in rows[1:])


def test_run_deterministic(capsys):
    assert main(["run", "--set", "weights.pstar=0.3333333333333333", "--set", "problem.t=2",
                 "--set", "problem.tprime=2", "--set", "problem.n_terms=4",
                 "--set", "weights.nu=0.05", "--set", "problem.c=0.0075",
                 "--set", "run.epsilon=2^-3"]) == 0
    assert "stderr" not in capsys.readouterr().out


def test_validate_passes_and_detects_fault(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out
    assert main(["validate", "--inject-fault", "sign"]) == 4
    out = capsys.readouterr().out
    assert "FAIL  telescoping" in out


def test_validate_without_cache(tmp_path, capsys):
    cache = tmp_path / "vectors"
    assert main(["validate", "--cache", str(cache)]) == 0
    shutil.rmtree(cache, ignore_errors=True)
    assert main(["validate", "--cache", str(cache)]) == 0
