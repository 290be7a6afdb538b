"""Scenario documents: loading, typed model, validation.

A scenario is one YAML (or JSON) document with ``schema_version: 1``. See
``README.md`` for the field reference and ``fedsim/scenarios/flagship.yaml``
for a complete example.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..errors import FedsimError, ScenarioError
from ..infrastructure import (
    Datacenter,
    NodeRole,
    OsKind,
    PhysicalNode,
    ResourceSpec,
    StorageAssignment,
    VmImageTemplate,
)
from ..latency import GatewayProfile
from ..scheduler import BudgetCap
from ..topology import Coordinate, LinkTable, NetEndpoint, Role
from ..transformation import Application, ColocationPolicy, transform

SCHEMA_VERSION = 1
FEDERATION_MODES = ("restrained", "full")
SCHEDULER_MODES = ("budget-constrained", "unconstrained")
SHAPES = ("constant", "sinusoidal", "trace-file")


@dataclass
class Offer:
    specs: tuple[ResourceSpec, ...]
    sla: float
    duration: float
    price_per_vm_hour: float


@dataclass
class CloudConfig:
    id: str
    kind: str
    gateway: GatewayProfile
    links: LinkTable
    nodes: list[dict]
    federation: Optional[str] = None
    federation_speed: float = 1.0
    federation_distance: Optional[float] = None
    offer: Optional[Offer] = None

    def build_datacenter(self) -> Datacenter:
        return Datacenter(self.id, [PhysicalNode.make(n["id"], n["coord"], n["capacity"], n["role"])
                                    for n in self.nodes])


@dataclass
class ServiceTime:
    dist: str = "constant"
    mean: float = 0.0


@dataclass
class AppConfig:
    app: Application
    storage: StorageAssignment
    sla: float
    users: list[str]
    service_time: ServiceTime
    workload: dict


@dataclass
class FailureConfig:
    time: float
    app: Optional[str] = None
    replica: int = 0
    vm: Optional[str] = None


@dataclass
class SchedulerConfig:
    mode: str = "budget-constrained"
    budget: BudgetCap = field(default_factory=lambda: BudgetCap(0.0))
    min_replicas: int = 2
    status_updates: str = "event-driven"

    @property
    def constrained(self) -> bool:
        return self.mode == "budget-constrained"


@dataclass
class Scenario:
    name: str
    seed: int
    slice_width: float
    slices: int
    requests_per_vm_hour: float
    repository_deploy_delay: float
    bus_latency: float
    colocation_policy: ColocationPolicy
    home_cloud: str
    clouds: dict[str, CloudConfig]
    templates: list[VmImageTemplate]
    users: dict[str, NetEndpoint]
    apps: list[AppConfig]
    scheduler: SchedulerConfig
    failures: list[FailureConfig]
    checklist: list[dict]
    raw: dict
    base_dir: Path = Path(".")

    @property
    def horizon(self) -> float:
        return self.slice_width * self.slices

    @property
    def per_vm_throughput(self) -> float:
        """Requests one VM serves per slice."""
        return self.requests_per_vm_hour * self.slice_width / 3600.0

    @property
    def home(self) -> CloudConfig:
        return self.clouds[self.home_cloud]

    @property
    def constraints(self):
        """Design constraints derived from the non-verifiable checklist items."""
        from .checklist import differentiate
        return differentiate(self.checklist).constraints


# -- loading -----------------------------------------------------------------

def load(path) -> dict:
    path = Path(path)
    with open(path) as fp:
        raw = yaml.safe_load(fp)
    if not isinstance(raw, dict):
        raise ScenarioError([f"{path}: top level must be a mapping"])
    raw.setdefault("_base_dir", str(path.parent))
    return raw


def set_param(raw: dict, dotted: str, value) -> dict:
    """Copy of ``raw`` with a dotted path (``a.b.0.c``) replaced by ``value``."""
    out = copy.deepcopy(raw)
    keys = dotted.split(".")
    node: Any = out
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out


# -- parsing -----------------------------------------------------------------

def _num(v, what, *, positive=False, allow_inf=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"{what} must be a number, got {v!r}")
    v = float(v)
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ValueError(f"{what} must be finite")
    if v < 0 or (positive and v == 0):
        raise ValueError(f"{what} must be {'positive' if positive else 'non-negative'}")
    return v


def _spec(d, what) -> ResourceSpec:
    if not isinstance(d, dict):
        raise ValueError(f"{what} must be a mapping with cpu, mem, disk")
    try:
        return ResourceSpec(d["cpu"], d["mem"], d["disk"]).require_positive()
    except KeyError as e:
        raise ValueError(f"{what} lacks {e.args[0]}") from None
    except FedsimError as e:
        raise ValueError(f"{what}: {e}") from None


def _coord(v, what) -> Coordinate:
    try:
        return Coordinate.of(v)
    except (FedsimError, TypeError, ValueError, KeyError):
        raise ValueError(f"{what}: invalid coordinate {v!r}") from None


def _parse_cloud(c: dict) -> CloudConfig:
    cid = str(c["id"])
    gw = c.get("gateway") or {}
    gw_ep = NetEndpoint(str(gw.get("id", f"{cid}-gw")), _coord(gw.get("coord"), f"cloud {cid} gateway"),
                        Role.GATEWAY)
    gateway = GatewayProfile(gw_ep, _num(gw.get("processing_time", 0.0), f"cloud {cid} gateway processing_time"))
    links = LinkTable(_num(c.get("default_speed", 1.0), f"cloud {cid} default_speed", positive=True))
    for ln in c.get("links") or ():
        links.set(str(ln["from"]), str(ln["to"]),
                  _num(ln["speed"], f"cloud {cid} link speed", positive=True))
    nodes = []
    for n in c.get("nodes") or ():
        role = str(n.get("role", "compute"))
        if role not in ("compute", "storage"):
            raise ValueError(f"node {n.get('id')}: role must be compute or storage")
        nodes.append({"id": str(n["id"]), "coord": _coord(n.get("coord", (0, 0)), f"node {n['id']}"),
                      "capacity": _spec(n.get("capacity"), f"node {n['id']} capacity"), "role": role})
    kind = str(c.get("kind", "private"))
    if kind not in ("private", "public"):
        raise ValueError(f"cloud {cid}: kind must be private or public")
    offer = None
    if c.get("offer"):
        o = c["offer"]
        specs = o.get("specs") or [o.get("spec")]
        offer = Offer(tuple(_spec(s, f"cloud {cid} offer spec") for s in specs),
                      _num(o.get("sla"), f"cloud {cid} offer sla", positive=True),
                      _num(o.get("duration"), f"cloud {cid} offer duration", positive=True),
                      _num(o.get("price_per_vm_hour"), f"cloud {cid} offer price_per_vm_hour"))
    fed = c.get("federation")
    if fed is not None and fed not in FEDERATION_MODES:
        raise ValueError(f"cloud {cid}: federation must be one of {FEDERATION_MODES}")
    fl = c.get("federation_link") or {}
    return CloudConfig(
        cid, kind, gateway, links, nodes, fed,
        _num(fl.get("speed", c.get("default_speed", 1.0)), f"cloud {cid} federation speed", positive=True),
        None if fl.get("distance") is None else _num(fl["distance"], f"cloud {cid} federation distance"),
        offer)


def _parse_app(a: dict, default_sla) -> AppConfig:
    aid = str(a["id"])
    app = Application(aid, OsKind(str(a["os"])), _spec(a.get("demand"), f"application {aid} demand"),
                      None if a.get("colocation_tag") is None else str(a["colocation_tag"]))
    st = a.get("storage") or {}
    if "node" not in st:
        raise ValueError(f"application {aid} has no storage assignment")
    storage = StorageAssignment(aid, str(st["node"]), int(st.get("space", 1)))
    sla = _num(a.get("sla", default_sla), f"application {aid} sla", positive=True)
    svc = a.get("service_time") or {}
    dist = str(svc.get("dist", "constant"))
    if dist not in ("constant", "exponential"):
        raise ValueError(f"application {aid}: service_time.dist must be constant or exponential")
    service = ServiceTime(dist, _num(svc.get("mean", 0.0), f"application {aid} service_time.mean"))
    wl = dict(a.get("workload") or {"shape": "constant", "value": 0})
    if wl.get("shape") not in SHAPES:
        raise ValueError(f"application {aid}: workload.shape must be one of {SHAPES}")
    return AppConfig(app, storage, sla, [str(u) for u in a.get("users") or ()], service, wl)


def parse(raw: dict) -> Scenario:
    """Typed scenario; raises on the first malformed field."""
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"schema_version must be {SCHEMA_VERSION}")
    clouds = {}
    for c in raw.get("clouds") or ():
        cc = _parse_cloud(c)
        if cc.id in clouds:
            raise ValueError(f"duplicate cloud id {cc.id}")
        clouds[cc.id] = cc
    templates = []
    for t in raw.get("templates") or ():
        templates.append(VmImageTemplate(str(t["id"]), OsKind(str(t["os"])),
                                         _spec(t, f"template {t.get('id')}")))
    users = {}
    for u in raw.get("users") or ():
        users[str(u["id"])] = NetEndpoint(str(u["id"]), _coord(u.get("coord"), f"user {u['id']}"), Role.USER)
    apps = [_parse_app(a, raw.get("sla", 1.0)) for a in raw.get("applications") or ()]
    sch = raw.get("scheduler") or {}
    bud = sch.get("budget") or {}
    scheduler = SchedulerConfig(
        str(sch.get("mode", "budget-constrained")),
        BudgetCap(_num(bud.get("amount", 0.0), "scheduler.budget.amount", allow_inf=True),
                  _num(bud.get("horizon", math.inf), "scheduler.budget.horizon", allow_inf=True)),
        int(sch.get("min_replicas", 2)),
        str(sch.get("status_updates", "event-driven")))
    failures = []
    for f in raw.get("failures") or ():
        failures.append(FailureConfig(_num(f["time"], "failure time"),
                                      None if f.get("app") is None else str(f["app"]),
                                      int(f.get("replica", 0)),
                                      None if f.get("vm") is None else str(f["vm"])))
    homes = [c.id for c in clouds.values() if c.kind == "private"]
    return Scenario(
        name=str(raw.get("name", "scenario")),
        seed=int(raw.get("seed", 0)),
        slice_width=_num(raw.get("slice_width", 3600.0), "slice_width", positive=True),
        slices=int(raw.get("slices", 1)),
        requests_per_vm_hour=_num(raw.get("requests_per_vm_hour", 3600.0), "requests_per_vm_hour",
                                  positive=True),
        repository_deploy_delay=_num(raw.get("repository_deploy_delay", 0.0), "repository_deploy_delay"),
        bus_latency=_num(raw.get("bus_latency", 0.0), "bus_latency"),
        colocation_policy=ColocationPolicy(raw.get("colocation_policy", "singleton")),
        home_cloud=homes[0] if homes else "",
        clouds=clouds, templates=templates, users=users, apps=apps, scheduler=scheduler,
        failures=failures, checklist=list(raw.get("checklist") or ()), raw=raw,
        base_dir=Path(raw.get("_base_dir", ".")))


# -- validation --------------------------------------------------------------

def validate(raw: dict) -> list[str]:
    """Every violation found in ``raw``; an empty list means the scenario is ok.

    Beyond field-level checks this dry-runs the transformation of the
    private cloud so that a valid scenario never fails at run start.
    """
    try:
        s = parse(raw)
    except ScenarioError as e:
        return e.violations
    except (FedsimError, ValueError, KeyError, TypeError) as e:
        msg = f"missing field {e.args[0]!r}" if isinstance(e, KeyError) else str(e)
        return [msg]
    v: list[str] = []
    if s.slices < 1:
        v.append("slices must be at least 1")
    privates = [c for c in s.clouds.values() if c.kind == "private"]
    if len(privates) != 1:
        v.append(f"exactly one private cloud required, found {len(privates)}")
    seen_ids: set[str] = set()
    for c in s.clouds.values():
        for eid in [c.gateway.endpoint.id] + [n["id"] for n in c.nodes]:
            if eid in seen_ids:
                v.append(f"duplicate endpoint id {eid}")
            seen_ids.add(eid)
        g = sum(1 for n in c.nodes if n["role"] == "storage")
        n_compute = len(c.nodes) - g
        if n_compute < 1:
            v.append(f"cloud {c.id}: no compute nodes")
        if c.kind == "private" and g < 1:
            v.append(f"cloud {c.id}: no storage nodes")
        if c.kind == "public":
            if c.federation is None:
                v.append(f"cloud {c.id}: public cloud needs federation: restrained|full")
            if c.offer is None:
                v.append(f"cloud {c.id}: public cloud needs an offer")
            elif c.offer.duration < s.slice_width:
                v.append(f"cloud {c.id}: offer duration is shorter than one slice")
    for uid in s.users:
        if uid in seen_ids:
            v.append(f"duplicate endpoint id {uid}")
        seen_ids.add(uid)
    tids = [t.id for t in s.templates]
    if len(set(tids)) != len(tids):
        v.append("duplicate template ids")
    if not s.templates:
        v.append("no VM image templates")
    aids = [a.app.id for a in s.apps]
    if len(set(aids)) != len(aids):
        v.append("duplicate application ids")
    home_nodes = {n["id"]: n for c in privates for n in c.nodes}
    for a in s.apps:
        node = home_nodes.get(a.storage.storage_node_id)
        if node is None or node["role"] != "storage":
            v.append(f"application {a.app.id}: storage node {a.storage.storage_node_id} is not a storage node of the private cloud")
        if not a.users:
            v.append(f"application {a.app.id}: no users")
        for u in a.users:
            if u not in s.users:
                v.append(f"application {a.app.id}: unknown user {u}")
        v.extend(_check_workload(a, s))
    if s.scheduler.mode not in SCHEDULER_MODES:
        v.append(f"scheduler.mode must be one of {SCHEDULER_MODES}")
    if s.scheduler.min_replicas < 1:
        v.append("scheduler.min_replicas must be at least 1")
    if s.scheduler.status_updates not in ("event-driven", "periodic"):
        v.append("scheduler.status_updates must be event-driven or periodic")
    for f in s.failures:
        if f.app is None and f.vm is None:
            v.append("failure needs app or vm")
        if f.app is not None and f.app not in aids:
            v.append(f"failure references unknown application {f.app}")
        if f.time > s.horizon:
            v.append(f"failure at {f.time} is past the horizon {s.horizon}")
    names = [c.get("name") for c in s.checklist]
    if len(set(names)) != len(names):
        v.append("duplicate checklist item names")
    if not v and privates:
        v.extend(_dry_run_transform(s))
    return v


def _check_workload(a: AppConfig, s: Scenario) -> list[str]:
    from ..simengine import WorkloadGenerator
    try:
        WorkloadGenerator.from_config(a.workload, base_dir=s.base_dir).generate(s.slices)
    except (FedsimError, ValueError, KeyError, OSError, TypeError) as e:
        return [f"application {a.app.id}: workload: {e}"]
    return []


def _dry_run_transform(s: Scenario) -> list[str]:
    dc = s.home.build_datacenter()
    try:
        transform(dc, [a.app for a in s.apps], [a.storage for a in s.apps], s.templates,
                  s.colocation_policy)
    except FedsimError as e:
        return [f"transformation fails: {e}"]
    return []


def require_valid(raw: dict) -> Scenario:
    violations = validate(raw)
    if violations:
        raise ScenarioError(violations)
    return parse(raw)
