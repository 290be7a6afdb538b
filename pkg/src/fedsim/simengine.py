"""Deterministic discrete-event engine for federated-cloud provisioning runs.

Events are ordered by ``(time, seq)`` where ``seq`` is the global scheduling
order, so a run is a pure function of the scenario and the seed.

Random draws come from one ``numpy.random.Generator`` seeded with the run
seed, in this order: for each application (scenario order) and each slice,
the arrival offsets within the slice; then, per application, one user index
and one service time for each of its requests in arrival order. Nothing
drawn depends on scheduling decisions.

Each slice boundary runs the capacity planner for every service (one
service per consolidated VM bundle): local replicas are added while the
datacenter has room, the excess is outsourced within the budget under a
per-slice contract, and whatever is left is shortfall. Requests of the
slice are then tagged local/outsourced/shortfall in an evenly interleaved
pattern that matches those shares exactly.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import CapacityExceeded, InvalidShape, ServiceUnavailable, UnknownVm
from .federation import (
    Bus,
    Contract,
    ContractEnd,
    ContractInitiation,
    FederationMessage,
    FeeConfirmation,
    Need,
    OutsourcingConfirmation,
    OutsourcingOffer,
    SlaObservation,
    StatusUpdate,
    WorkloadStatus,
    account,
    BrokerLedger,
    negotiate,
)
from .infrastructure import VmImageTemplate, VmState
from .latency import (
    COMPONENT_NAMES,
    FederationLink,
    LatencyBreakdown,
    VmProfile,
    provision_full,
    provision_private,
    provision_restrained,
)
from .scheduler import (
    BillingState,
    CapacityPlanner,
    ContractClosed,
    ContractOpened,
    HaPolicy,
    Replica,
    ServiceMap,
    VirtualResourceManager,
    WorkloadTrace,
    dispatch,
    update_billing,
)
from .topology import distance
from .transformation import transform

EVENT_KINDS = ("request_arrival", "dispatch_complete", "vm_service_complete", "response_delivered",
               "slice_boundary", "vm_failure", "vm_recovered", "bus_delivery", "contract_timer")


# -- workload generation -----------------------------------------------------

@dataclass(frozen=True)
class WorkloadGenerator:
    """Source of a per-slice demand pattern.

    Shapes: ``constant`` (``value``), ``sinusoidal`` (``period`` in slices,
    ``peak``, ``trough``, optional ``phase`` in slices and multiplicative
    Gaussian ``noise``), ``trace-file`` (``values`` inline or ``path`` to a
    file holding one number per line, repeated cyclically).
    """

    shape: str
    seed: int = 0
    value: float = 0.0
    period: float = 24.0
    peak: float = 0.0
    trough: float = 0.0
    phase: float = 0.0
    noise: float = 0.0
    values: tuple[float, ...] = ()
    slice_width: float = 1.0

    def __post_init__(self):
        if self.shape not in ("constant", "sinusoidal", "trace-file"):
            raise InvalidShape(f"unknown shape {self.shape!r}")
        for name in ("value", "period", "peak", "trough", "noise", "phase"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
                raise InvalidShape(f"{name} must be a finite non-negative number, got {v!r}")
        if self.shape == "sinusoidal":
            if self.period <= 0:
                raise InvalidShape("period must be positive")
            if self.peak < self.trough:
                raise InvalidShape("peak must be >= trough")
        if self.shape == "trace-file":
            if not self.values:
                raise InvalidShape("trace-file shape needs at least one value")
            for v in self.values:
                if not (math.isfinite(v) and v >= 0):
                    raise InvalidShape(f"trace values must be finite and >= 0, got {v}")

    @classmethod
    def from_config(cls, cfg: dict, *, base_dir: Path = Path("."), default_seed: int = 0,
                    slice_width: float = 1.0) -> "WorkloadGenerator":
        cfg = dict(cfg)
        shape = cfg.pop("shape", "constant")
        values = cfg.pop("values", None)
        path = cfg.pop("path", None)
        if shape == "trace-file" and values is None and path is not None:
            p = Path(path)
            if not p.is_absolute():
                p = Path(base_dir) / p
            values = [float(line.split(",")[0]) for line in p.read_text().splitlines()
                      if line.strip() and not line.startswith("#")]
        known = {"seed", "value", "period", "peak", "trough", "phase", "noise"}
        extra = set(cfg) - known
        if extra:
            raise InvalidShape(f"unknown workload fields {sorted(extra)}")
        kw: dict[str, Any] = {k: v for k, v in cfg.items() if k != "seed"}
        return cls(shape, int(cfg.get("seed", default_seed)),
                   values=tuple(float(v) for v in values or ()), slice_width=slice_width, **kw)

    def generate(self, slices: int) -> WorkloadTrace:
        if slices < 0:
            raise InvalidShape("slices must be >= 0")
        if self.shape == "constant":
            demand = [float(self.value)] * slices
        elif self.shape == "sinusoidal":
            amp = self.peak - self.trough
            demand = [self.trough + amp * (1.0 - math.cos(2.0 * math.pi * (i + self.phase) / self.period)) / 2.0
                      for i in range(slices)]
            # exact extremes where the phase lands on them
            demand = [min(max(d, self.trough), self.peak) for d in demand]
        else:
            demand = [self.values[i % len(self.values)] for i in range(slices)]
        if self.noise > 0:
            rng = np.random.default_rng(self.seed)
            eps = rng.standard_normal(slices)
            demand = [max(d * (1.0 + self.noise * e), 0.0) for d, e in zip(demand, eps)]
        return WorkloadTrace(self.slice_width, tuple(demand), self.shape)


def generate(gen: WorkloadGenerator, slices: int) -> WorkloadTrace:
    return gen.generate(slices)


# -- run state ---------------------------------------------------------------

LOCAL, REMOTE, SHORT = "local", "outsourced", "shortfall"


def interleave(n: int, local: int, outsourced: int) -> list[str]:
    """Spread ``local`` and ``outsourced`` tags evenly over ``n`` slots."""
    out = []
    for i in range(n):
        if (i + 1) * local // n - i * local // n:
            out.append(LOCAL)
        else:
            out.append(None)
    rest = [i for i, t in enumerate(out) if t is None]
    m = len(rest)
    for j, i in enumerate(rest):
        out[i] = REMOTE if (j + 1) * outsourced // m - j * outsourced // m else SHORT
    return out


class Request:
    __slots__ = ("id", "app_id", "service_id", "slice", "arrival", "user", "service_time",
                 "category", "replica", "breakdown", "outcome", "latency", "violated")

    def __init__(self, id, app_id, service_id, slice_, arrival, user, service_time):
        self.id = id
        self.app_id = app_id
        self.service_id = service_id
        self.slice = slice_
        self.arrival = arrival
        self.user = user
        self.service_time = service_time
        self.category = None
        self.replica = None
        self.breakdown = None
        self.outcome = "pending"
        self.latency = None
        self.violated = False


@dataclass
class Service:
    id: str
    app_ids: tuple[str, ...]
    image: VmImageTemplate
    sla: float
    arrivals: list[int] = field(default_factory=list)
    schedule: dict[int, list] = field(default_factory=dict)
    cursor: dict[int, int] = field(default_factory=dict)

    def next_category(self, k: int) -> str:
        i = self.cursor.get(k, 0)
        self.cursor[k] = i + 1
        return self.schedule[k][i]


@dataclass
class Recovery:
    service_id: str
    failed_vm: str
    failed_at: float
    replacement_vm: Optional[str] = None
    running_at: Optional[float] = None

    @property
    def recovery_time(self) -> Optional[float]:
        return None if self.running_at is None else self.running_at - self.failed_at


@dataclass
class AppStats:
    app_id: str
    arrivals: int = 0
    delivered: int = 0
    failed: int = 0
    unavailable: int = 0
    shortfall: int = 0
    in_flight: int = 0
    sla_violations: int = 0
    mean: float = math.nan
    p50: float = math.nan
    p95: float = math.nan
    max: float = math.nan

    @property
    def completed(self) -> int:
        return self.delivered + self.failed

    @property
    def violation_rate(self) -> float:
        return self.sla_violations / self.completed if self.completed else 0.0


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    requests: list[dict]
    apps: dict[str, AppStats]
    total_cost: float
    shortfall: int
    sla_violation_count: int
    sla_violation_rate: float
    utilization: list[dict]
    vm_count: list[dict]
    billing: list[dict]
    decisions: list[dict]
    recoveries: list[Recovery]
    event_counts: dict[str, int]
    service_unavailable: int
    skipped_failures: int
    federation_revenue: dict[str, float]
    conservation_gap: float
    trace: list[dict] = field(default_factory=list)
    bus_log: list[dict] = field(default_factory=list)

    @property
    def recovery_times(self) -> list[float]:
        return [r.recovery_time for r in self.recoveries if r.recovery_time is not None]

    @property
    def latencies(self) -> list[float]:
        return [r["total"] for r in self.requests]


def percentile(sorted_values, p: float) -> float:
    """Nearest-rank percentile of an ascending sequence."""
    if not sorted_values:
        return math.nan
    k = max(math.ceil(p / 100.0 * len(sorted_values)) - 1, 0)
    return sorted_values[k]


class Simulation:
    """One run of a validated scenario."""

    def __init__(self, scenario, seed: Optional[int] = None, *, trace: bool = False):
        self.s = scenario
        self.seed = scenario.seed if seed is None else int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.trace_enabled = trace
        self.now = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self.event_counts: Counter = Counter()
        self.trace: list[dict] = []

        self.home = scenario.home_cloud
        self.dcs = {cid: c.build_datacenter() for cid, c in scenario.clouds.items()}
        self.bus = Bus(scenario.clouds.keys(), scenario.bus_latency)
        self.ledger = BrokerLedger()
        self.smap = ServiceMap()
        self.vrm = VirtualResourceManager(self.dcs, self.ledger, self.smap)
        sch = scenario.scheduler
        self.billing: Optional[BillingState] = BillingState(sch.budget.amount) if sch.constrained else None
        self.ha = HaPolicy(sch.min_replicas)
        self.catalog: dict[str, list[OutsourcingOffer]] = {}
        self.bus.subscribe(self.home, self._on_home_message)

        self.services: dict[str, Service] = {}
        self.app_service: dict[str, str] = {}
        self.app_cfg = {a.app.id: a for a in scenario.apps}
        self.requests: list[Request] = []
        self.outstanding: dict[str, int] = {}
        self.vm_requests: dict[str, dict[int, Request]] = {}
        self.draining: dict[str, str] = {}
        self.failed_vms: list[str] = []
        self.pending: list[Recovery] = []
        self.recoveries: list[Recovery] = []
        self.contract_vms: dict[str, list[str]] = {}
        self.contract_end: dict[str, float] = {}
        self.fees_closed: list[float] = []
        self.unavailable = 0
        self.skipped_failures = 0
        self.decisions: list[dict] = []
        self.util_rows: list[dict] = []
        self.vm_rows: list[dict] = []
        self.billing_rows: list[dict] = []
        self._contract_ids = itertools.count(1)
        self._setup_done = False
        self._injected: list[tuple[float, Optional[str], Optional[str], int]] = []

    # -- setup ---------------------------------------------------------------

    def setup(self) -> None:
        if self._setup_done:
            return
        s = self.s
        result = transform(self.dcs[self.home], [a.app for a in s.apps], [a.storage for a in s.apps],
                           s.templates, s.colocation_policy, at=0.0)
        by_apps = {b.app_ids: b for b in result.plan.bundles.values()}
        for vm in result.instances:
            bundle = by_apps[tuple(vm.hosted_app_ids)]
            bundle_id = bundle.id
            svc = Service(bundle_id, bundle.app_ids, vm.image,
                          min(self.app_cfg[a].sla for a in bundle.app_ids))
            self.services[svc.id] = svc
            for a in bundle.app_ids:
                self.app_service[a] = svc.id
                self.smap.register(a)
            self._map_local(vm)
        self.planner = CapacityPlanner(self.smap, self.home, {sid: sv.image for sid, sv in self.services.items()},
                                       s.per_vm_throughput)
        self._setup_done = True

    def _map_local(self, vm) -> None:
        node = self.dcs[self.home].nodes[vm.host_node_id]
        rep = Replica(vm, node.endpoint, self.home)
        for a in vm.hosted_app_ids:
            self.smap.add(a, rep)
        self.outstanding.setdefault(vm.id, 0)
        self.vm_requests.setdefault(vm.id, {})

    def inject_failure(self, time: float, vm_id: Optional[str] = None, *, app: Optional[str] = None,
                       replica: int = 0) -> None:
        """Schedule a VM failure.

        With ``vm_id`` the VM must already exist; with ``app`` the
        ``replica``-th running local replica (by VM id) at that time fails.
        """
        self.setup()
        if vm_id is not None:
            vm = self.dcs[self.home].vms.get(vm_id)
            if vm is None or vm.state is not VmState.RUNNING:
                raise UnknownVm(vm_id)
        elif app is None or app not in self.app_service:
            raise UnknownVm(f"no application {app!r}")
        self._injected.append((float(time), vm_id, app, replica))

    # -- event queue ---------------------------------------------------------

    def _at(self, time: float, kind: str, payload=None) -> None:
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def _publish(self, sender: str, body) -> None:
        for d in self.bus.publish(sender, body, self.now):
            self._at(d.deliver_at, "bus_delivery", d)

    # -- run -----------------------------------------------------------------

    def _draw_requests(self) -> None:
        s = self.s
        W = s.slice_width
        per_app_times = []
        for a in s.apps:
            gen = WorkloadGenerator.from_config(a.workload, base_dir=s.base_dir, slice_width=W)
            trace = gen.generate(s.slices)
            counts = [int(math.floor(d + 0.5)) for d in trace.demand]
            times = []
            for k, n in enumerate(counts):
                offs = np.sort(self.rng.random(n))
                times.extend((k, k * W + float(u) * W) for u in offs)
            per_app_times.append((a, counts, times))
        rid = 0
        for a, counts, times in per_app_times:
            svc = self.services[self.app_service[a.app.id]]
            if not svc.arrivals:
                svc.arrivals = [0] * s.slices
            for k, n in enumerate(counts):
                svc.arrivals[k] += n
            users = self.rng.integers(len(a.users), size=len(times))
            if a.service_time.dist == "exponential" and a.service_time.mean > 0:
                svc_times = self.rng.exponential(a.service_time.mean, size=len(times))
            else:
                svc_times = np.full(len(times), a.service_time.mean)
            for (k, t), ui, st in zip(times, users.tolist(), svc_times.tolist()):
                self.requests.append(Request(rid, a.app.id, svc.id, k, t, s.users[a.users[ui]], st))
                rid += 1
        for svc in self.services.values():
            if not svc.arrivals:
                svc.arrivals = [0] * s.slices

    def run(self) -> MetricsReport:
        self.setup()
        s = self.s
        self._draw_requests()
        for cid, c in s.clouds.items():
            if c.kind == "public" and c.offer is not None:
                self._publish_status(cid)
        for k in range(s.slices + 1):
            self._at(k * s.slice_width, "slice_boundary", k)
        for f in s.failures:
            self._injected.append((f.time, f.vm, f.app, f.replica))
        for t, vm_id, app, idx in self._injected:
            self._at(t, "vm_failure", (vm_id, app, idx))
        for r in self.requests:
            self._at(r.arrival, "request_arrival", r)
        self._sample_vm_count()

        handlers = {k: getattr(self, "_on_" + k) for k in EVENT_KINDS}
        while self._heap:
            time, seq, kind, payload = heapq.heappop(self._heap)
            if time < self.now:
                raise RuntimeError("simulated clock moved backward")
            self.now = time
            self.event_counts[kind] += 1
            if self.trace_enabled:
                self.trace.append(self._trace_record(time, seq, kind, payload))
            handlers[kind](payload)
        return self._report()

    # -- federation ----------------------------------------------------------

    def _publish_status(self, cid: str) -> None:
        o = self.s.clouds[cid].offer
        self._publish(cid, StatusUpdate(o.specs, o.sla, o.duration, o.price_per_vm_hour))

    def _on_home_message(self, msg: FederationMessage) -> None:
        b = msg.body
        if isinstance(b, StatusUpdate):
            self.catalog[msg.sender] = [
                OutsourcingOffer(f"{msg.sender}-o{i}", spec, b.supported_sla, b.contract_duration,
                                 b.price_per_vm_hour, provider=msg.sender)
                for i, spec in enumerate(b.supported_specs)]
        elif isinstance(b, (FeeConfirmation, WorkloadStatus)):
            account(self.ledger, b, at=self.now)

    def _on_bus_delivery(self, d) -> None:
        self.bus.deliver(d)

    def _offers(self) -> list[OutsourcingOffer]:
        return [o for p in sorted(self.catalog) for o in self.catalog[p]]

    def _open_contract(self, offer: OutsourcingOffer, svc: Service) -> Contract:
        cid = f"C{next(self._contract_ids):04d}"
        c = Contract(cid, offer.provider, self.home, offer.spec, offer.sla, offer.price_per_vm_hour,
                     offer.offer_id)
        self.ledger.open(c)
        self._publish(offer.provider, offer)
        c.confirm()
        self._publish(self.home, OutsourcingConfirmation(offer.offer_id))
        c.initiate(self.now)
        self._publish(offer.provider, ContractInitiation(cid, offer.offer_id))
        self.contract_vms[cid] = []
        return c

    def _end_contract(self, c: Contract) -> None:
        account(self.ledger, ContractEnd(c.contract_id), at=self.now)
        self._publish(self.home, ContractEnd(c.contract_id))
        fee = self.ledger.due[c.contract_id]
        pending = sum(self.outstanding.get(v, 0) for v in self.contract_vms[c.contract_id])
        self._publish(c.provider, WorkloadStatus(c.contract_id, self._contract_served(c), pending))
        self._publish(c.provider, FeeConfirmation(c.contract_id, fee))
        self.fees_closed.append(fee)
        if self.billing is not None:
            self.billing = update_billing(self.billing, ContractClosed(c.contract_id, fee))
        for vm_id in self.contract_vms[c.contract_id]:
            self._drain(vm_id, c.provider)

    def _contract_served(self, c: Contract) -> int:
        return int(round(c.vm_hours_used * self.s.requests_per_vm_hour))

    def _expire_contracts(self) -> None:
        for cid, end in list(self.contract_end.items()):
            if end <= self.now and self.ledger.contracts[cid].is_open:
                self._end_contract(self.ledger.contracts[cid])

    def _on_contract_timer(self, cid: str) -> None:
        c = self.ledger.contracts[cid]
        if c.is_open:
            self._end_contract(c)

    # -- capacity ------------------------------------------------------------

    def _drain(self, vm_id: str, cloud: str) -> None:
        self.smap.remove_vm(vm_id)
        if self.outstanding.get(vm_id, 0) == 0:
            self._release(vm_id, cloud)
        else:
            self.draining[vm_id] = cloud

    def _release(self, vm_id: str, cloud: str) -> None:
        vm = self.dcs[cloud].vms[vm_id]
        if vm.state in (VmState.RUNNING, VmState.FAILED):
            self.dcs[cloud].terminate(vm_id)
        self._sample_vm_count()
        if cloud == self.home:
            self._try_replacements()

    def _try_replacements(self) -> None:
        while self.pending:
            rec = self.pending[0]
            svc = self.services[rec.service_id]
            try:
                vm = self.dcs[self.home].try_launch(svc.image, app_ids=svc.app_ids, at=self.now)
            except CapacityExceeded:
                return
            self.pending.pop(0)
            self._map_local(vm)
            rec.replacement_vm = vm.id
            rec.running_at = self.now
            self._sample_vm_count()

    def _on_slice_boundary(self, k: int) -> None:
        s = self.s
        self._expire_contracts()
        for vm_id in self.failed_vms:
            self.dcs[self.home].terminate(vm_id)
        if self.failed_vms:
            self.failed_vms = []
            self._sample_vm_count()
            self._try_replacements()
        if k >= s.slices:
            self._sample(k)
            return
        if s.scheduler.status_updates == "periodic" and k > 0:
            for cid, c in s.clouds.items():
                if c.kind == "public" and c.offer is not None:
                    self._publish_status(cid)
        offers = self._offers()
        rpvh = s.requests_per_vm_hour
        for sid in sorted(self.services):
            svc = self.services[sid]
            forecast = svc.arrivals[k]
            offer = negotiate(offers, Need(svc.image.spec, svc.sla))
            price = None if offer is None else offer.price_per_vm_hour / rpvh
            pending = sum(1 for r in self.pending if r.service_id == sid)
            actions = self.planner.plan(sid, svc.app_ids, forecast, self.dcs[self.home], self.billing,
                                        self.ha, price_per_request=price, slice_index=k,
                                        exclude=self.draining, pending_replacements=pending, at=self.now)
            for vm in actions.added_local:
                self._map_local(vm)
            for vm_id in actions.removed:
                self._drain(vm_id, self.home)
            d = actions.decision
            outsourced, shortfall, cost = d.outsourced_share, d.shortfall, d.projected_cost
            n_remote, provider = 0, ""
            if actions.add_remote > 0:
                c = self._open_contract(offer, svc)
                provider = c.provider
                for _ in range(actions.add_remote):
                    try:
                        rep = self.vrm.scale_out(svc.image, c.provider, svc.app_ids,
                                                 contract_id=c.contract_id, at=self.now)
                    except CapacityExceeded:
                        break
                    self.contract_vms[c.contract_id].append(rep.vm_id)
                    self.outstanding[rep.vm_id] = 0
                    self.vm_requests[rep.vm_id] = {}
                    n_remote += 1
                servable = n_remote * s.per_vm_throughput
                if servable < outsourced:
                    shortfall += outsourced - math.floor(servable)
                    outsourced = float(math.floor(servable))
                    cost = outsourced * price
                if self.billing is not None:
                    self.billing = update_billing(self.billing, ContractOpened(c.contract_id, cost))
                # contracts cover exactly one slice (offers last at least that long)
                self.contract_end[c.contract_id] = (k + 1) * s.slice_width
                self._at(self.contract_end[c.contract_id], "contract_timer", c.contract_id)
            svc.schedule[k] = interleave(forecast, int(round(d.local_share)), int(round(outsourced)))
            self.decisions.append({
                "slice": k, "service": sid, "demand": forecast,
                "local_replicas": len(self.smap.replicas(svc.app_ids[0], self.home)),
                "added_local": len(actions.added_local), "removed_local": len(actions.removed),
                "remote_vms": n_remote, "provider": provider,
                "local_share": d.local_share, "outsourced_share": outsourced,
                "shortfall": shortfall, "projected_cost": cost,
                "degraded": int(shortfall > 0),
            })
        self._sample(k)

    # -- failures ------------------------------------------------------------

    def _on_vm_failure(self, payload) -> None:
        vm_id, app, idx = payload
        dc = self.dcs[self.home]
        if vm_id is None:
            reps = sorted(self.smap.replicas(app, self.home), key=lambda r: r.vm_id)
            reps = [r for r in reps if r.vm_id not in self.draining]
            vm_id = reps[idx].vm_id if idx < len(reps) else None
        vm = dc.vms.get(vm_id) if vm_id else None
        if vm is None or vm.state is not VmState.RUNNING:
            self.skipped_failures += 1
            return
        dc.fail(vm.id)
        self.smap.remove_vm(vm.id)
        self.draining.pop(vm.id, None)
        for r in self.vm_requests.get(vm.id, {}).values():
            r.outcome = "failed"
            r.violated = True
        self.vm_requests[vm.id] = {}
        self.outstanding[vm.id] = 0
        self.failed_vms.append(vm.id)
        sid = self.app_service[vm.hosted_app_ids[0]]
        rec = Recovery(sid, vm.id, self.now)
        self.recoveries.append(rec)
        self._at(self.now + self.s.repository_deploy_delay, "vm_recovered", rec)
        self._sample_vm_count()

    def _on_vm_recovered(self, rec: Recovery) -> None:
        self.pending.append(rec)
        self._try_replacements()

    # -- requests ------------------------------------------------------------

    def _on_request_arrival(self, r: Request) -> None:
        svc = self.services[r.service_id]
        r.category = svc.next_category(r.slice)
        if r.category == SHORT:
            r.outcome = "shortfall"
            return
        if r.category == LOCAL:
            cands = self.smap.replicas(r.app_id, self.home)
        else:
            cands = [x for x in self.smap.replicas(r.app_id) if x.cloud_id != self.home]
        open_ids = [c.contract_id for c in self.ledger.contracts.values() if c.is_open]
        try:
            rep = dispatch(cands, self.outstanding, home_cloud=self.home, open_contracts=open_ids)
        except ServiceUnavailable:
            r.outcome = "unavailable"
            r.violated = True
            self.unavailable += 1
            return
        r.replica = rep
        r.breakdown = self._breakdown(r, rep)
        r.outcome = "in_flight"
        self.outstanding[rep.vm_id] += 1
        self.vm_requests[rep.vm_id][r.id] = r
        if rep.cloud_id != self.home:
            self.vrm.accrue(rep.vm_id, 1.0 / self.s.requests_per_vm_hour)
        b = r.breakdown
        self._at(self.now + (b.user_to_gateway + b.gateway_processing + b.federation_hop
                             + b.remote_gateway_processing + b.gateway_to_vm),
                 "dispatch_complete", r)

    def _breakdown(self, r: Request, rep: Replica) -> LatencyBreakdown:
        s = self.s
        vm = VmProfile(rep.endpoint, r.service_time)
        if rep.cloud_id == self.home:
            home = s.clouds[self.home]
            return provision_private(r.user, home.gateway, vm, home.links)
        remote = s.clouds[rep.cloud_id]
        if remote.federation == "full":
            return provision_full(r.user, remote.gateway, vm, remote.links)
        home = s.clouds[self.home]
        d_fed = remote.federation_distance
        if d_fed is None:
            d_fed = distance(home.gateway.endpoint.coord, remote.gateway.endpoint.coord)
        link = FederationLink(d_fed, remote.federation_speed)
        return provision_restrained(r.user, home.gateway, link, remote.gateway, vm, home.links, remote.links)

    def _on_dispatch_complete(self, r: Request) -> None:
        if r.outcome != "in_flight":
            return
        self._at(self.now + r.breakdown.vm_processing, "vm_service_complete", r)

    def _on_vm_service_complete(self, r: Request) -> None:
        if r.outcome != "in_flight":
            return
        vm_id = r.replica.vm_id
        self.outstanding[vm_id] -= 1
        del self.vm_requests[vm_id][r.id]
        r.outcome = "responding"
        self._at(self.now + r.breakdown.vm_to_user, "response_delivered", r)
        if vm_id in self.draining and self.outstanding[vm_id] == 0:
            self._release(vm_id, self.draining.pop(vm_id))

    def _on_response_delivered(self, r: Request) -> None:
        if r.outcome != "responding":
            return
        r.outcome = "delivered"
        r.latency = r.breakdown.total
        r.violated = r.latency > self.app_cfg[r.app_id].sla
        if r.replica.contract_id is not None:
            account(self.ledger, SlaObservation(r.replica.contract_id, r.latency, r.violated))

    # -- sampling / report ---------------------------------------------------

    def _sample_vm_count(self) -> None:
        for cid in sorted(self.dcs):
            vms = self.dcs[cid].vms.values()
            self.vm_rows.append({"time": self.now, "cloud": cid,
                                 "running": sum(1 for v in vms if v.state is VmState.RUNNING),
                                 "failed": sum(1 for v in vms if v.state is VmState.FAILED)})

    def _sample(self, k: int) -> None:
        for cid in sorted(self.dcs):
            for n in self.dcs[cid].compute_nodes:
                u, c = n.utilization, n.capacity
                self.util_rows.append({"time": self.now, "cloud": cid, "node": n.id,
                                       "cpu": u.cpu / c.cpu, "mem": u.mem / c.mem, "disk": u.disk / c.disk})
        self._sample_vm_count()
        b = self.billing
        self.billing_rows.append({
            "time": self.now, "slice": k,
            "spent": b.spent if b else sum(self.fees_closed),
            "committed": b.committed if b else 0.0,
            "remaining": b.remaining if b else math.inf})

    def _trace_record(self, time, seq, kind, payload) -> dict:
        rec: dict[str, Any] = {"time": float(f"{time:.9g}"), "seq": seq, "kind": kind}
        if isinstance(payload, Request):
            rec["request"] = payload.id
        elif isinstance(payload, Recovery):
            rec["vm"] = payload.failed_vm
        elif kind == "bus_delivery":
            rec["receiver"] = payload.receiver
            rec["message"] = payload.message.kind
        elif payload is not None:
            rec["detail"] = payload if isinstance(payload, (int, float, str)) else list(payload)
        return rec

    def _report(self) -> MetricsReport:
        from .federation import delivery_record
        apps = {a.app.id: AppStats(a.app.id) for a in self.s.apps}
        lat: dict[str, list[float]] = {a: [] for a in apps}
        records = []
        for r in self.requests:
            st = apps[r.app_id]
            st.arrivals += 1
            if r.outcome == "delivered":
                st.delivered += 1
                lat[r.app_id].append(r.latency)
                st.sla_violations += r.violated
                b = r.breakdown
                rec = {"request": r.id, "app": r.app_id, "slice": r.slice, "arrival": r.arrival,
                       "path": b.path.value, "cloud": r.replica.cloud_id, "vm": r.replica.vm_id}
                rec.update(zip(COMPONENT_NAMES, b.components))
                rec.update({"total": r.latency, "sla": self.app_cfg[r.app_id].sla,
                            "violated": int(r.violated)})
                records.append(rec)
            elif r.outcome in ("failed", "unavailable"):
                st.failed += 1
                st.sla_violations += 1
                st.unavailable += r.outcome == "unavailable"
            elif r.outcome == "shortfall":
                st.shortfall += 1
            else:
                st.in_flight += 1
        for aid, st in apps.items():
            xs = sorted(lat[aid])
            if xs:
                st.mean = math.fsum(xs) / len(xs)
                st.p50 = percentile(xs, 50)
                st.p95 = percentile(xs, 95)
                st.max = xs[-1]
        completed = sum(a.completed for a in apps.values())
        violations = sum(a.sla_violations for a in apps.values())
        total_cost = self.billing.spent if self.billing is not None else sum(self.fees_closed)
        return MetricsReport(
            scenario=self.s.name, seed=self.seed, requests=records, apps=apps,
            total_cost=total_cost, shortfall=sum(a.shortfall for a in apps.values()),
            sla_violation_count=violations,
            sla_violation_rate=violations / completed if completed else 0.0,
            utilization=self.util_rows, vm_count=self.vm_rows, billing=self.billing_rows,
            decisions=self.decisions, recoveries=self.recoveries,
            event_counts={k: self.event_counts.get(k, 0) for k in EVENT_KINDS},
            service_unavailable=self.unavailable, skipped_failures=self.skipped_failures,
            federation_revenue=dict(sorted(self.ledger.revenue.items())),
            conservation_gap=self.ledger.conservation_gap(),
            trace=self.trace,
            bus_log=[delivery_record(d) for d in self.bus.log])


def run(scenario, seed: Optional[int] = None, *, trace: bool = False) -> MetricsReport:
    """Validate and run a scenario (typed or raw mapping)."""
    from .harness.scenario import Scenario, require_valid
    if not isinstance(scenario, Scenario):
        scenario = require_valid(scenario)
    else:
        require_valid(scenario.raw)
    return Simulation(scenario, seed, trace=trace).run()
