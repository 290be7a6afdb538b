import copy
from pathlib import Path

import pytest

from fedsim.harness.scenario import load

# filled by test_acceptance.py, printed after the run
ACCEPTANCE_LINES: list[str] = []

FLAGSHIP = Path(__file__).resolve().parents[1] / "src" / "fedsim" / "scenarios" / "flagship.yaml"


def base_scenario(**top):
    """Small valid scenario: one private cloud, one public cloud, one app."""
    raw = {
        "schema_version": 1,
        "name": "tiny",
        "seed": 7,
        "slice_width": 60.0,
        "slices": 2,
        "requests_per_vm_hour": 600.0,  # 10 requests per VM per slice
        "repository_deploy_delay": 5.0,
        "bus_latency": 0.0,
        "sla": 10.0,
        "clouds": [
            {"id": "A", "kind": "private",
             "gateway": {"id": "a-gw", "coord": [0, 0], "processing_time": 0.0},
             "default_speed": 1.0,
             "nodes": [
                 {"id": "a-n1", "coord": [0, 0], "role": "compute",
                  "capacity": {"cpu": 4, "mem": 4096, "disk": 100}},
                 {"id": "a-san", "coord": [0, 0], "role": "storage",
                  "capacity": {"cpu": 1, "mem": 1024, "disk": 1000}},
             ]},
            {"id": "B", "kind": "public", "federation": "full",
             "gateway": {"id": "b-gw", "coord": [0, 0], "processing_time": 0.0},
             "default_speed": 1.0,
             "nodes": [{"id": "b-n1", "coord": [0, 0], "role": "compute",
                        "capacity": {"cpu": 64, "mem": 65536, "disk": 6400}}],
             "offer": {"spec": {"cpu": 1, "mem": 1024, "disk": 10}, "sla": 10.0,
                       "duration": 3600, "price_per_vm_hour": 1.0}},
        ],
        "templates": [{"id": "t1", "os": "linux", "cpu": 1, "mem": 1024, "disk": 10}],
        "users": [{"id": "u1", "coord": [0, 0]}],
        "applications": [
            {"id": "app", "os": "linux", "demand": {"cpu": 1, "mem": 1024, "disk": 10},
             "storage": {"node": "a-san", "space": 10}, "users": ["u1"],
             "service_time": {"dist": "constant", "mean": 1.0},
             "workload": {"shape": "constant", "value": 4}},
        ],
        "scheduler": {"mode": "budget-constrained", "budget": {"amount": 100.0}, "min_replicas": 2},
        "failures": [],
        "checklist": [],
    }
    raw.update(top)
    return raw


@pytest.fixture
def tiny():
    return base_scenario()


@pytest.fixture
def flagship_raw():
    return load(FLAGSHIP)


@pytest.fixture
def make_scenario():
    return lambda **kw: copy.deepcopy(base_scenario(**kw))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
