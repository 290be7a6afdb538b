import copy
import csv
import os

import pytest
from hypothesis import given, strategies as st

from fedsim.errors import InvalidChecklist, ScenarioError
from fedsim.harness.checklist import Checklist, ChecklistItem, differentiate
from fedsim.harness.cli import main
from fedsim.harness.report import IoError, report
from fedsim.harness.scenario import parse, require_valid, set_param, validate
from fedsim.simengine import run

from conftest import FLAGSHIP, base_scenario


def test_flagship_validates(flagship_raw):
    assert validate(flagship_raw) == []
    s = parse(flagship_raw)
    assert [c.name for c in s.constraints] == ["budget-cap", "sla-latency"]


def test_no_compute_nodes(tiny):
    tiny["clouds"][0]["nodes"] = [n for n in tiny["clouds"][0]["nodes"] if n["role"] == "storage"]
    assert any("no compute nodes" in v for v in validate(tiny))


def test_missing_storage_node_names_app(tiny):
    tiny["applications"][0]["storage"]["node"] = "ghost"
    v = validate(tiny)
    assert v and any("app" in x and "ghost" in x for x in v)


def test_validate_collects_several_and_never_mutates(tiny):
    tiny["applications"][0]["users"] = ["nobody"]
    tiny["scheduler"]["mode"] = "yolo"
    tiny["failures"] = [{"time": 1e9, "app": "app"}]
    before = copy.deepcopy(tiny)
    v = validate(tiny)
    assert len(v) >= 3
    assert tiny == before


def test_bad_schema_version(tiny):
    tiny["schema_version"] = 2
    assert validate(tiny)


def test_infeasible_transform_rejected_up_front(tiny):
    tiny["applications"][0]["demand"] = {"cpu": 64, "mem": 1024, "disk": 10}
    tiny["templates"].append({"id": "huge", "os": "linux", "cpu": 64, "mem": 1024, "disk": 10})
    assert any("transformation" in v for v in validate(tiny))
    with pytest.raises(ScenarioError):
        run(tiny)


def test_set_param_copies(tiny):
    out = set_param(tiny, "clouds.0.gateway.processing_time", 9.0)
    assert out["clouds"][0]["gateway"]["processing_time"] == 9.0
    assert tiny["clouds"][0]["gateway"]["processing_time"] == 0.0


def test_differentiate_examples():
    d = differentiate([{"name": "budget-cap", "verifiable": "no", "value": 5},
                       {"name": "san-available", "verifiable": "yes"}])
    assert [c.name for c in d.constraints] == ["budget-cap"]
    assert [i.name for i in d.verified] == ["san-available"]
    assert ("scheduler.mode", "budget-constrained") in d.constraints[0].implies
    e = differentiate(Checklist())
    assert e.verified == [] and e.constraints == []
    allc = differentiate([{"name": n, "verifiable": False} for n in "abc"])
    assert [c.name for c in allc.constraints] == ["a", "b", "c"] and allc.verified == []


def test_duplicate_checklist_names():
    with pytest.raises(InvalidChecklist):
        Checklist((ChecklistItem("a", True), ChecklistItem("a", False)))


@given(st.lists(st.tuples(st.text(min_size=1, max_size=5), st.booleans()), max_size=10, unique_by=lambda t: t[0]))
def test_differentiate_is_partition(items):
    cl = Checklist(tuple(ChecklistItem(n, v) for n, v in items))
    d = differentiate(cl)
    ver = [i.name for i in d.verified]
    con = [c.name for c in d.constraints]
    assert sorted(ver + con) == sorted(n for n, _ in items)
    assert not set(ver) & set(con)


def read(path):
    with open(path, newline="") as fp:
        return list(csv.reader(fp))


def test_empty_report_has_headers(tmp_path, tiny):
    tiny["applications"][0]["workload"] = {"shape": "constant", "value": 0}
    report(run(tiny), tmp_path)
    rows = read(tmp_path / "latency.csv")
    assert len(rows) == 1 and rows[0][0] == "request"
    assert len(read(tmp_path / "recovery.csv")) == 1


def test_report_row_count_and_roundtrip(tmp_path, tiny):
    tiny["slices"] = 1
    tiny["applications"][0]["workload"] = {"shape": "constant", "value": 3}
    tiny["applications"][0]["service_time"] = {"dist": "exponential", "mean": 0.7}
    m = run(tiny)
    report(m, tmp_path)
    rows = read(tmp_path / "latency.csv")
    assert len(rows) == 4
    hdr = rows[0]
    for rec, row in zip(m.requests, rows[1:]):
        got = float(row[hdr.index("total")])
        assert got == float(f"{rec['total']:.9g}")


def test_two_runs_byte_identical(tmp_path, tiny):
    tiny["failures"] = [{"time": 10.0, "app": "app"}]
    for d in ("a", "b"):
        report(run(tiny), tmp_path / d, trace=True)
    for f in sorted(os.listdir(tmp_path / "a")):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_unwritable_destination(tmp_path, tiny):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        report(run(tiny), blocker / "sub")


def _write_yaml(path, raw):
    import yaml
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def test_cli_validate_run_sweep(tmp_path, tiny, capsys):
    f = _write_yaml(tmp_path / "s.yaml", tiny)
    assert main(["validate", f]) == 0
    assert main(["run", f, "--seed", "3", "--out", str(tmp_path / "out"), "--trace"]) == 0
    assert (tmp_path / "out" / "trace.ndjson").exists()
    assert main(["sweep", f, "--param", "scheduler.budget.amount", "--values", "0,1",
                 "--out", str(tmp_path / "sw")]) == 0
    assert len(read(tmp_path / "sw" / "sweep.csv")) == 3


def test_cli_exit_codes(tmp_path, tiny):
    bad = copy.deepcopy(tiny)
    bad["clouds"][0]["nodes"] = []
    assert main(["validate", _write_yaml(tmp_path / "bad.yaml", bad)]) == 1
    assert main(["run", _write_yaml(tmp_path / "bad2.yaml", bad)]) == 1
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 3
    f = _write_yaml(tmp_path / "ok.yaml", tiny)
    (tmp_path / "blk").write_text("")
    assert main(["run", f, "--out", str(tmp_path / "blk" / "x")]) == 3
    with pytest.raises(SystemExit) as e:
        main(["run"])
    assert e.value.code == 2


def test_cli_flagship_validate():
    assert main(["validate", str(FLAGSHIP)]) == 0


@given(st.sampled_from(["slice_width", "requests_per_vm_hour", "bus_latency", "repository_deploy_delay"]),
       st.one_of(st.floats(-10, 1e4, allow_nan=False), st.integers(-5, 5), st.none(), st.text(max_size=3)))
def test_valid_iff_run_accepts(key, value):
    raw = base_scenario(slices=1)
    raw[key] = value
    ok = validate(raw) == []
    try:
        run(raw)
        accepted = True
    except ScenarioError:
        accepted = False
    assert ok == accepted
