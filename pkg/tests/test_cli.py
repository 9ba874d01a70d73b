import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from photoformer.cli import (
    EXIT_INFEASIBLE,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_UNKNOWN_MODEL,
    EXIT_USAGE,
    EXIT_VERIFY_FAILED,
    main,
)
from photoformer.perf import _data_doc

SMALL_ARCH = ["--h", "1,4", "--l", "1,2", "--k", "12,51", "--n", "12,17", "--models", "bert-base,transformer-base"]


def _digest(folder: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir()) if p.is_file()}


def test_exit_code_values():
    assert (EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE, EXIT_INPUT, EXIT_UNKNOWN_MODEL, EXIT_INFEASIBLE) == \
        (0, 1, 2, 3, 4, 5)


def test_sim_writes_reports(tmp_path, capsys):
    assert main(["sim", "--model", "bert-base", "--output-dir", str(tmp_path)]) == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["sim_bert-base.json", "sim_bert-base_breakdown.csv", "sim_bert-base_schedule.csv"]
    doc = json.loads((tmp_path / "sim_bert-base.json").read_text())
    assert doc["schema_version"] == 1 and doc["arch"] == {"H": 4, "L": 2, "K": 51, "N": 17}
    provenance = {a["name"]: a["provenance"] for a in doc["assumptions"]}
    assert provenance["dac_mode"] == "default" and provenance["seq_len"] == "default"
    assert "GOPS" in capsys.readouterr().out


def test_sim_formats_and_flags(tmp_path):
    assert main(["sim", "--model", "vit-base", "--arch", "edge-optimal", "--seq-len", "64", "--pipelined",
                 "--dac-mode", "column", "--format", "json", "--output-dir", str(tmp_path)]) == EXIT_OK
    assert [p.name for p in tmp_path.iterdir()] == ["sim_vit-base.json"]
    doc = json.loads((tmp_path / "sim_vit-base.json").read_text())
    assert doc["pipelined"] is True
    assert {"name": "dac_mode", "value": "column", "provenance": "flag"} in doc["assumptions"]


def test_sim_is_byte_identical_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["sim", "--model", "albert-base", "--output-dir", str(d)]) == EXIT_OK
    assert _digest(a) == _digest(b)


def test_unknown_model_lists_builtins(tmp_path, capsys):
    assert main(["sim", "--model", "gpt-9", "--output-dir", str(tmp_path)]) == EXIT_UNKNOWN_MODEL
    err = capsys.readouterr().err
    for name in ("transformer-base", "bert-base", "albert-base", "vit-base"):
        assert name in err
    assert not list(tmp_path.iterdir())


def test_missing_and_malformed_inputs(tmp_path):
    out = str(tmp_path / "out")
    assert main(["sim", "--model", str(tmp_path / "nope.json"), "--output-dir", out]) == EXIT_INPUT
    assert main(["sim", "--model", "bert-base", "--device-file", str(tmp_path / "x.json"),
                 "--output-dir", out]) == EXIT_INPUT
    broken = tmp_path / "devices.json"
    broken.write_text(json.dumps({"devices": {"dac": {"latency_ns": 1}}}))
    assert main(["sim", "--model", "bert-base", "--device-file", str(broken), "--output-dir", out]) == EXIT_INPUT
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    assert main(["sim", "--model", "bert-base", "--loss-file", str(garbage), "--output-dir", out]) == EXIT_INPUT


def test_bad_arch_is_usage_error(tmp_path):
    assert main(["sim", "--model", "bert-base", "--arch", "4,2", "--output-dir", str(tmp_path)]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["sim"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_input_files_not_mutated(tmp_path):
    files = {}
    for name in ("devices.json", "losses.json", "electronics.json"):
        p = tmp_path / name
        p.write_text(json.dumps(_data_doc(name), indent=1))
        files[name] = p
    before = _digest(tmp_path)
    out = tmp_path / "out"
    assert main(["sim", "--model", "bert-base", "--device-file", str(files["devices.json"]),
                 "--loss-file", str(files["losses.json"]), "--electronics-file", str(files["electronics.json"]),
                 "--output-dir", str(out)]) == EXIT_OK
    after = _digest(tmp_path)
    assert after == before
    doc = json.loads((out / "sim_bert-base.json").read_text())
    assert not any(a["name"] == "device_file" for a in doc["assumptions"])


def test_dse_mrbank_default_grid_reports_no_feasible(tmp_path, capsys):
    assert main(["dse-mrbank", "--output-dir", str(tmp_path)]) == EXIT_INFEASIBLE
    doc = json.loads((tmp_path / "dse_mrbank.json").read_text())
    assert doc["points_evaluated"] == 610 and doc["points_feasible"] == 0 and doc["ranked"] == []
    assert "no feasible design" in capsys.readouterr().out
    assert {p.name for p in tmp_path.iterdir()} == {"dse_mrbank.json", "dse_mrbank_ranked.csv",
                                                    "dse_mrbank_all.csv", "dse_mrbank_frontier.csv"}


def test_dse_mrbank_wide_grid_and_workers(tmp_path):
    runs = []
    for w in (1, 3):
        d = tmp_path / f"w{w}"
        assert main(["dse-mrbank", "--q-max", "40000", "--q-step", "500", "--workers", str(w),
                     "--output-dir", str(d)]) == EXIT_OK
        runs.append(_digest(d))
    assert runs[0] == runs[1]
    doc = json.loads((tmp_path / "w1" / "dse_mrbank.json").read_text())
    assert doc["ranked"][0]["channel_spacing_nm"] == 1.0


def test_dse_arch_small_lattice(tmp_path):
    runs = []
    for w in (1, 2):
        d = tmp_path / f"w{w}"
        assert main(["dse-arch", *SMALL_ARCH, "--workers", str(w), "--output-dir", str(d)]) == EXIT_OK
        runs.append(_digest(d))
    assert runs[0] == runs[1]
    doc = json.loads((tmp_path / "w1" / "dse_arch.json").read_text())
    assert doc["points_evaluated"] == 16 and doc["lattice"]["K"] == [12, 51]
    assert doc["ranked"] and doc["pareto_front"]
    objectives = [p["objective"] for p in doc["ranked"]]
    assert objectives == sorted(objectives)


def test_dse_arch_infeasible_cap(tmp_path):
    assert main(["dse-arch", *SMALL_ARCH, "--power-cap", "0.001", "--output-dir", str(tmp_path)]) == \
        EXIT_INFEASIBLE
    assert json.loads((tmp_path / "dse_arch.json").read_text())["ranked"] == []


def test_verify_passes(capsys):
    assert main(["verify", "--scale", "0.2"]) == EXIT_OK
    assert "checks passed" in capsys.readouterr().out


def test_compare_reports_and_baselines(tmp_path):
    out = tmp_path / "out"
    assert main(["sim", "--model", "bert-base", "--output-dir", str(out), "--format", "json"]) == EXIT_OK
    assert main(["sim", "--model", "bert-base", "--arch", "edge-optimal", "--output-dir", str(tmp_path),
                 "--format", "json"]) == EXIT_OK
    base = tmp_path / "base.json"
    base.write_text(json.dumps({"baselines": [{"label": "gpu", "gops": 100.0, "epb_j_per_bit": 1e-9,
                                               "source": "datasheet"}]}))
    cmp_dir = tmp_path / "cmp"
    assert main(["compare", str(out / "sim_bert-base.json"), str(tmp_path / "sim_bert-base.json"),
                 "--baselines", str(base), "--output-dir", str(cmp_dir)]) == EXIT_OK
    doc = json.loads((cmp_dir / "compare.json").read_text())
    assert [r["label"] for r in doc["rows"]] == ["bert-base@4,2,51,17", "bert-base@4,1,12,12", "gpu"]
    assert doc["rows"][0]["gops_norm"] == 1.0 and doc["sources"]["gpu"] == "datasheet"
    assert (cmp_dir / "compare_table.csv").read_text().startswith("label,gops,epb_j_per_bit")
    nosrc = tmp_path / "nosrc.json"
    nosrc.write_text(json.dumps({"baselines": [{"label": "x", "gops": 1.0, "epb_j_per_bit": 1.0}]}))
    assert main(["compare", "--baselines", str(nosrc), "--output-dir", str(cmp_dir)]) == EXIT_INPUT
    assert main(["compare", "--output-dir", str(cmp_dir)]) == EXIT_INPUT


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "photoformer", "sim", "--model", "nope"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == EXIT_UNKNOWN_MODEL and "bert-base" in proc.stderr
