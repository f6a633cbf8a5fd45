import json
import subprocess
import sys

import pytest

from bergman_lab.cli import (
    CSV_FIELDS,
    REGISTRY,
    ConfigError,
    ExperimentConfig,
    Report,
    Row,
    default_config,
    emit_report,
    main,
    parse_report,
    run_experiment,
)

ROW = Row("dimensions", "CP2_O2_level_half", 3, "invariant_dimension", 4.0, 4.0, 0.5, "pass")


def run_main(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_config(tmp_path, **doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


# ---------------------------------------------------------------- reports

def test_header_only_and_one_row_csv():
    empty = emit_report(Report("dimensions", "CP1_O2", ()), "csv")
    assert empty == ",".join(CSV_FIELDS) + "\n"
    one = emit_report(Report("dimensions", "CP2_O2_level_half", (ROW,)), "csv")
    lines = one.splitlines()
    assert len(lines) == 2 and lines[1].startswith("dimensions,CP2_O2_level_half,3,")


def test_round_trips():
    rep = Report("dimensions", "CP2_O2_level_half",
                 (ROW, Row("dimensions", "CP2_O2_level_half", None, "slope", 1.0000000000000002)))
    assert parse_report(emit_report(rep, "json"), "json") == rep
    assert parse_report(emit_report(rep, "csv"), "csv") == rep
    with pytest.raises(ValueError):
        emit_report(rep, "xml")


def test_json_has_all_fields():
    doc = json.loads(emit_report(Report("x", "CP1_O2", (ROW,)), "json"))
    assert set(doc["rows"][0]) == set(CSV_FIELDS)


# ---------------------------------------------------------------- configs

def test_registry_names():
    assert set(REGISTRY) == {"expand-diagonal", "offdiag-decay", "localize", "normal-slice",
                             "dimensions", "coefficients-engine", "coefficients-oracle",
                             "toeplitz-symbol", "isometry", "commutator", "selftest"}


@pytest.mark.parametrize("kw", [
    {"experiment": "nope"},
    {"model": "CP2_O2_level_half", "experiment": "commutator"},
    {"p_grid": ()},
    {"p_grid": (4, 2)},
    {"p_grid": (0, 2)},
    {"tolerances": {"slope": 0.0}},
    {"output_format": "xml"},
])
def test_invalid_configs(kw):
    base = {"experiment": "dimensions", "model": "CP2_O2_level_half", "p_grid": (2, 3)}
    base.update(kw)
    with pytest.raises(ConfigError):
        ExperimentConfig(**base).validate()


def test_default_config_unknown():
    with pytest.raises(ConfigError):
        default_config("nope")


def test_dimensions_experiment_rows():
    rep = run_experiment(default_config("dimensions"))
    assert rep.passed
    dims = [r for r in rep.rows if r.quantity == "invariant_dimension"]
    assert [r.p for r in dims] == list(range(2, 41))
    assert all(r.value == r.p + 1 for r in dims)


# ---------------------------------------------------------------- command line

def test_list_and_selftest(capsys):
    code, out, _ = run_main(capsys, "list")
    assert code == 0 and all(name in out for name in REGISTRY)
    code, out, _ = run_main(capsys, "selftest")
    assert code == 0
    rep = parse_report(out, "csv")
    assert len(rep.rows) >= 10 and rep.passed


def test_config_file_and_overrides(tmp_path, capsys):
    out_path = tmp_path / "out.json"
    cfg = write_config(tmp_path, experiment="dimensions", model="CP2_O2_level_half",
                       p_grid=[2, 3, 4, 5, 6], output={"path": str(out_path), "format": "json"})
    code, out, _ = run_main(capsys, "run", "--config", cfg, "--pmax", "4")
    assert code == 0 and out == ""
    rep = parse_report(out_path.read_text(), "json")
    assert sorted({r.p for r in rep.rows if r.p is not None}) == [2, 3, 4]
    code, out, _ = run_main(capsys, "run", "--config", cfg, "--out", "-", "--format", "csv")
    assert code == 0 and out.startswith("experiment,model,p,")


def test_bad_config_exit_codes(tmp_path, capsys):
    assert run_main(capsys, "run")[0] == 2
    assert run_main(capsys, "run", "--config", str(tmp_path / "missing.json"))[0] == 2
    cfg = write_config(tmp_path, experiment="dimensions", p_grid=[3, 2])
    code, _, err = run_main(capsys, "run", "--config", cfg)
    assert code == 2 and "ascending" in err
    code, _, err = run_main(capsys, "run", "--experiment", "dimensions", "--pmax", "1")
    assert code == 2


def test_unwritable_output(tmp_path, capsys):
    target = tmp_path / "no" / "such" / "dir" / "out.csv"
    code, _, err = run_main(capsys, "run", "--experiment", "dimensions", "--pmax", "5",
                            "--out", str(target))
    assert code == 2 and "cannot write" in err


def test_exit_status_tracks_failures(capsys):
    # at p = 60 the off-level ratio (16/25)^60 ~ 2e-12 is above 1e-15
    code, out, _ = run_main(capsys, "run", "--experiment", "localize", "--pmax", "60")
    rep = parse_report(out, "csv")
    assert code == 1 and not rep.passed
    assert any(r.verdict == "fail" for r in rep.rows)
    code, out, _ = run_main(capsys, "run", "--experiment", "normal-slice", "--pmax", "100")
    assert code == 0 and parse_report(out, "csv").passed


def test_byte_determinism(tmp_path, capsys, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("BERGMAN_LAB_THREADS", threads)
        code, out, _ = run_main(capsys, "run", "--experiment", "coefficients-oracle", "--seed", "5",
                                "--format", "json")
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]


def test_bad_thread_setting(capsys, monkeypatch):
    monkeypatch.setenv("BERGMAN_LAB_THREADS", "many")
    assert run_main(capsys, "run", "--experiment", "dimensions", "--pmax", "4")[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bergman_lab", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "expand-diagonal" in res.stdout
