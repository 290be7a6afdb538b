import random

import pytest
from hypothesis import given, settings, strategies as st

from fedsim.errors import MissingStorageAssignment, NoFittingTemplate, PlacementInfeasible
from fedsim.infrastructure import Datacenter, OsKind, PhysicalNode, ResourceSpec, StorageAssignment, VmImageTemplate
from fedsim.transformation import (
    Application,
    ColocationPolicy,
    classify_by_os,
    consolidate,
    plan_placement,
    select_template,
    transform,
)

LINUX, WIN = OsKind("linux"), OsKind("windows")


def check_plan(plan, dc, apps, storage):
    """Brute-force validity oracle for a placement plan; returns a list of problems."""
    problems = []
    nodes = dc.nodes
    per_node = {}
    for b, nid in plan.assignments.items():
        if nodes[nid].role.value != "compute":
            problems.append(f"{b} on non-compute node {nid}")
        per_node.setdefault(nid, []).append(plan.images[b].spec)
    for nid, specs in per_node.items():
        total = [sum(s.cpu for s in specs), sum(s.mem for s in specs), sum(s.disk for s in specs)]
        cap = nodes[nid].capacity
        if total[0] > cap.cpu or total[1] > cap.mem or total[2] > cap.disk:
            problems.append(f"{nid} over capacity")
    app_by_id = {a.id: a for a in apps}
    seen = []
    for b in plan.bundles.values():
        oses = {app_by_id[a].os for a in b.app_ids}
        if oses != {b.os} or plan.images[b.id].os != b.os:
            problems.append(f"{b.id} mixes OS")
        d = b.demand
        s = plan.images[b.id].spec
        if not (d.cpu <= s.cpu and d.mem <= s.mem and d.disk <= s.disk):
            problems.append(f"{b.id} template too small")
        seen.extend(b.app_ids)
    if sorted(seen) != sorted(app_by_id):
        problems.append("not exactly one bundle per app")
    links = [sa.app_id for _, sa in plan.storage_links]
    if sorted(links) != sorted(app_by_id):
        problems.append("not exactly one storage link per app")
    for _, sa in plan.storage_links:
        if nodes[sa.storage_node_id].role.value != "storage":
            problems.append(f"{sa.app_id} storage not on a storage node")
    return problems


def random_instance(rng: random.Random):
    n = rng.randint(2, 5)
    g = rng.randint(1, n - 1)
    nodes = [PhysicalNode.make(f"c{i}", capacity=(rng.randint(1, 12), rng.randint(1, 12) * 1024, rng.randint(1, 12) * 50))
             for i in range(n - g)]
    nodes += [PhysicalNode.make(f"s{i}", capacity=(1, 1024, 1000), role="storage") for i in range(g)]
    m = rng.randint(0, 10)
    apps = [Application(f"a{i}", rng.choice([LINUX, WIN]),
                        ResourceSpec(rng.randint(1, 2), rng.randint(1, 2) * 512, rng.randint(1, 2) * 10),
                        rng.choice([None, "t1", "t2"])) for i in range(m)]
    storage = [StorageAssignment(a.id, f"s{rng.randrange(g)}", 1) for a in apps]
    templates = [VmImageTemplate(f"{os.name}-{k}", os, ResourceSpec(k, k * 1024, k * 20))
                 for os in (LINUX, WIN) for k in (1, 2, 4, 8)]
    policy = rng.choice(list(ColocationPolicy))
    return Datacenter("A", nodes), apps, storage, templates, policy


def test_classify_and_consolidate_singleton():
    apps = [Application("b", WIN, ResourceSpec(1, 1, 1)), Application("a", LINUX, ResourceSpec(1, 1, 1))]
    classes = classify_by_os(apps)
    assert [o.name for o in classes] == ["linux", "windows"]
    bundles = consolidate(classes)
    assert [b.app_ids for b in bundles] == [("a",), ("b",)]


def test_by_tag_colocates_same_os_only():
    apps = [Application("a", LINUX, ResourceSpec(1, 100, 1), "web"),
            Application("b", LINUX, ResourceSpec(1, 200, 1), "web"),
            Application("c", WIN, ResourceSpec(1, 100, 1), "web")]
    bundles = consolidate(classify_by_os(apps), ColocationPolicy.BY_TAG)
    assert [(b.id, b.app_ids) for b in bundles] == [("b-linux-web", ("a", "b")), ("b-windows-web", ("c",))]
    assert bundles[0].demand == ResourceSpec(2, 300, 2)


def test_select_template_smallest_dominating():
    ts = [VmImageTemplate("big", LINUX, ResourceSpec(4, 8192, 80)),
          VmImageTemplate("mid", LINUX, ResourceSpec(2, 4096, 40)),
          VmImageTemplate("win", WIN, ResourceSpec(1, 1024, 10))]
    b = consolidate(classify_by_os([Application("a", LINUX, ResourceSpec(2, 2048, 10))]))[0]
    assert select_template(b, ts).id == "mid"
    b2 = consolidate(classify_by_os([Application("a", LINUX, ResourceSpec(8, 1, 1))]))[0]
    with pytest.raises(NoFittingTemplate):
        select_template(b2, ts)


def test_ffd_order_and_spread():
    dc = Datacenter("A", [PhysicalNode.make("n1", capacity=(8, 8192, 100)),
                          PhysicalNode.make("n2", capacity=(8, 8192, 100))])
    t1 = VmImageTemplate("s", LINUX, ResourceSpec(1, 1024, 10))
    t4 = VmImageTemplate("l", LINUX, ResourceSpec(4, 4096, 40))
    apps = [Application(x, LINUX, ResourceSpec(1, 1, 1)) for x in "abc"]
    bundles = consolidate(classify_by_os(apps))
    plan = plan_placement([(bundles[0], t1), (bundles[1], t4), (bundles[2], t4)], dc)
    # the two large images go first, one per node, then the small one joins the emptier node
    assert plan.assignments == {"b-b": "n1", "b-c": "n2", "b-a": "n1"}
    assert list(plan.assignments) == ["b-b", "b-c", "b-a"]


def test_infeasible_reports_residual_and_rolls_back():
    dc = Datacenter("A", [PhysicalNode.make("n1", capacity=(1, 1024, 10)),
                          PhysicalNode.make("s", role="storage")])
    apps = [Application(x, LINUX, ResourceSpec(1, 1024, 10)) for x in "ab"]
    st_ = [StorageAssignment(a.id, "s", 1) for a in apps]
    ts = [VmImageTemplate("t", LINUX, ResourceSpec(1, 1024, 10))]
    before = dc.ledger()
    with pytest.raises(PlacementInfeasible) as ei:
        transform(dc, apps, st_, ts)
    assert ei.value.residual == {"n1": ResourceSpec.zero()}
    assert dc.ledger() == before and not dc.vms


def test_missing_storage_assignment():
    dc = Datacenter("A", [PhysicalNode.make("n1"), PhysicalNode.make("s", role="storage")])
    apps = [Application("a", LINUX, ResourceSpec(1, 1, 1))]
    ts = [VmImageTemplate("t", LINUX, ResourceSpec(1, 1024, 10))]
    with pytest.raises(MissingStorageAssignment):
        transform(dc, apps, [], ts)
    with pytest.raises(MissingStorageAssignment):
        transform(dc, apps, [StorageAssignment("a", "n1", 1)], ts)


def test_empty_input_is_empty_plan():
    dc = Datacenter("A", [PhysicalNode.make("n1"), PhysicalNode.make("s", role="storage")])
    res = transform(dc, [], [], [])
    assert res.instances == [] and res.plan.assignments == {}


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transform_plans_pass_oracle(seed):
    dc, apps, storage, templates, policy = random_instance(random.Random(seed))
    before = dc.ledger()
    try:
        res = transform(dc, apps, storage, templates, policy)
    except PlacementInfeasible:
        assert dc.ledger() == before
        assert not dc.vms
        return
    assert check_plan(res.plan, dc, apps, storage) == []
    assert len(res.plan.bundles) <= len(apps)
    assert len(res.instances) == len(res.plan.bundles)
    for vm in res.instances:
        assert vm.host_node_id == res.plan.assignments[
            next(b for b, x in res.plan.bundles.items() if x.app_ids == tuple(vm.hosted_app_ids))]


def test_oracle_catches_overpacking():
    dc = Datacenter("A", [PhysicalNode.make("c0", capacity=(1, 1024, 20)), PhysicalNode.make("s0", role="storage")])
    apps = [Application("a", LINUX, ResourceSpec(1, 512, 10)), Application("b", LINUX, ResourceSpec(1, 512, 10))]
    ts = [VmImageTemplate("t", LINUX, ResourceSpec(1, 1024, 20))]
    bundles = consolidate(classify_by_os(apps))
    plan = plan_placement([(bundles[0], ts[0])], dc)
    plan.assignments["b-b"] = "c0"
    plan.images["b-b"] = ts[0]
    plan.bundles["b-b"] = bundles[1]
    assert any("over capacity" in p for p in check_plan(plan, dc, apps, []))
