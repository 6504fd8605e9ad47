import os
import textwrap

import pytest

from beacon_search import harness
from beacon_search.catalog import load_catalog, resolve_catalog_path
from beacon_search.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main


TINY = """
problem:
  name: staircase
algorithms:
  - rs
  - name: beacon
    settings:
      kernel_family: squared_exponential
      hyper_restarts: 1
      num_features: 128
      acquisition_restarts: 2
run:
  iterations: 2
  n_init: 2
  replicates: 1
  workers: 1
output_dir: results
"""


def _write(tmp_path, body, name="experiment.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body), encoding="utf-8")
    return str(path)


def test_validate_accepts_good_config(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, TINY)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok: ")


def test_validate_names_the_bad_key(tmp_path, capsys):
    path = _write(tmp_path, TINY.replace("  replicates: 1", "  replicates: 1\n  budget: 5"))
    assert main(["validate", path]) == EXIT_INVALID
    assert "run.budget" in capsys.readouterr().err


def test_missing_config_file_is_invalid(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "absent.yaml")]) == EXIT_INVALID
    assert "config error" in capsys.readouterr().err


def test_list_problems(capsys):
    assert main(["list-problems"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in load_catalog(resolve_catalog_path()).names():
        assert name in out
    assert out.splitlines()[-1].startswith("pool")


@pytest.mark.parametrize("argv", [[], ["explode"], ["run"], ["run", "x.yaml", "--seed", "abc"]])
def test_usage_errors(argv):
    assert main(argv) == EXIT_INVALID


def test_run_then_report(tmp_path, capsys):
    config = _write(tmp_path, TINY)
    assert main(["--log-level", "WARNING", "run", config, "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "mean_reach" in out
    results = tmp_path / "results"
    for name in ("reachability.csv", "reachability.svg", "summary.txt", "run_status.json"):
        assert (results / name).exists()
    assert len(list((results / "traces").rglob("*.jsonl"))) == 2

    report_dir = tmp_path / "report"
    assert main(["report", str(results), "--output", str(report_dir)]) == EXIT_OK
    assert (report_dir / "reachability.csv").read_bytes() == (results / "reachability.csv").read_bytes()


def test_run_overrides_output(tmp_path):
    config = _write(tmp_path, TINY.replace("  - name: beacon\n    settings:\n      kernel_family: squared_exponential\n      hyper_restarts: 1\n      num_features: 128\n      acquisition_restarts: 2\n", ""))
    elsewhere = tmp_path / "elsewhere"
    assert main(["run", config, "--output", str(elsewhere), "--replicates", "2"]) == EXIT_OK
    assert len(list((elsewhere / "traces").rglob("*.jsonl"))) == 2
    assert not os.path.exists(tmp_path / "results")


def test_report_without_traces_fails(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == EXIT_FAILED
    assert "no traces" in capsys.readouterr().err


def test_failed_replicate_exits_two(tmp_path, monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise RuntimeError("solver diverged")

    monkeypatch.setattr(harness, "run_replicate", broken)
    assert main(["run", _write(tmp_path, TINY)]) == EXIT_FAILED
    assert "solver diverged" in capsys.readouterr().err


CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


@pytest.mark.parametrize("name", sorted(n for n in os.listdir(CONFIG_DIR) if n.endswith(".yaml")))
def test_shipped_configs_validate(name):
    assert main(["validate", os.path.join(CONFIG_DIR, name)]) == EXIT_OK
