"""Budget-constrained high-availability scheduling.

Pieces: the workload-slicing outsourcing planner, the service mapper, the
gateway dispatcher, the cost calculator (billing state), the capacity
planner and the virtual resource manager that scales out to public clouds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import BudgetBreach, CapacityExceeded, NoActiveContract, ServiceUnavailable, UnknownContract
from .federation import BrokerLedger
from .infrastructure import Datacenter, ResourceSpec, VmImageTemplate, VmInstance, VmState
from .topology import NetEndpoint

# Absolute slack for float drift when comparing accumulated money to the cap.
MONEY_EPS = 1e-9


# -- workload slicing --------------------------------------------------------

@dataclass(frozen=True)
class WorkloadTrace:
    slice_width: float
    demand: tuple[float, ...]
    pattern_label: Optional[str] = None

    def __post_init__(self):
        if not (self.slice_width > 0 and math.isfinite(self.slice_width)):
            raise ValueError(f"slice_width must be positive, got {self.slice_width}")
        object.__setattr__(self, "demand", tuple(float(d) for d in self.demand))
        for d in self.demand:
            if not (math.isfinite(d) and d >= 0):
                raise ValueError(f"demand values must be finite and >= 0, got {d}")

    def __len__(self):
        return len(self.demand)


@dataclass(frozen=True)
class BudgetCap:
    amount: float
    horizon: float = math.inf

    def __post_init__(self):
        if not self.amount >= 0:
            raise ValueError(f"budget must be non-negative, got {self.amount}")


@dataclass(frozen=True)
class SliceDecision:
    index: int
    demand: float
    local_share: float
    outsourced_share: float
    shortfall: float
    projected_cost: float


@dataclass(frozen=True)
class OutsourcingPlan:
    decisions: tuple[SliceDecision, ...]
    total_projected_cost: float

    @property
    def shortfall(self) -> float:
        return sum(d.shortfall for d in self.decisions)

    @property
    def outsourced(self) -> float:
        return sum(d.outsourced_share for d in self.decisions)


def plan_outsourcing(trace: WorkloadTrace, local_capacity: Union[float, Sequence[float]],
                     price: float, budget: BudgetCap, *, integral: bool = False,
                     start_index: int = 0) -> OutsourcingPlan:
    """Greedy per-slice plan: local first, then outsource excess within budget.

    ``local_capacity`` may be one value for every slice or one per slice.
    With ``integral=True`` outsourced shares are whole requests.
    """
    n = len(trace.demand)
    cap = np.broadcast_to(np.asarray(local_capacity, dtype=np.float64), (n,))
    if np.any(cap < 0) or not price >= 0 or not math.isfinite(price):
        raise ValueError("local_capacity and price must be non-negative and finite")
    local, outs, cost, short, total = kernels.greedy_outsource(
        np.asarray(trace.demand, dtype=np.float64), cap, float(price), float(budget.amount),
        bool(integral))
    decisions = tuple(
        SliceDecision(start_index + i, trace.demand[i], float(local[i]), float(outs[i]),
                      float(short[i]), float(cost[i]))
        for i in range(n))
    return OutsourcingPlan(decisions, float(total))


# -- service mapper and dispatch ---------------------------------------------

@dataclass
class Replica:
    vm: VmInstance
    endpoint: NetEndpoint
    cloud_id: str
    contract_id: Optional[str] = None

    @property
    def vm_id(self) -> str:
        return self.vm.id


@dataclass
class ServiceMap:
    entries: dict[str, list[Replica]] = field(default_factory=dict)

    def add(self, app_id: str, replica: Replica) -> None:
        self.entries.setdefault(app_id, []).append(replica)

    def register(self, app_id: str) -> None:
        self.entries.setdefault(app_id, [])

    def remove_vm(self, vm_id: str) -> None:
        for reps in self.entries.values():
            reps[:] = [r for r in reps if r.vm_id != vm_id]

    def replicas(self, app_id: str, cloud_id: Optional[str] = None) -> list[Replica]:
        return [r for r in locate(self, app_id) if cloud_id is None or r.cloud_id == cloud_id]


def locate(smap: ServiceMap, app_id: str) -> list[Replica]:
    """Running replicas of ``app_id`` across all clouds."""
    return [r for r in smap.entries.get(app_id, ()) if r.vm.state is VmState.RUNNING]


def dispatch(replicas: Sequence[Replica], outstanding: Mapping[str, int], *,
             home_cloud: Optional[str] = None, open_contracts: Iterable[str] = ()) -> Replica:
    """Least-outstanding-requests replica; ties go to the lowest VM id.

    A replica outside ``home_cloud`` is eligible only while its contract id
    is in ``open_contracts``.
    """
    open_contracts = set(open_contracts)
    eligible = [r for r in replicas
                if r.vm.state is VmState.RUNNING
                and (home_cloud is None or r.cloud_id == home_cloud or r.contract_id in open_contracts)]
    if not eligible:
        raise ServiceUnavailable("no running replica")
    return min(eligible, key=lambda r: (outstanding.get(r.vm_id, 0), r.vm_id))


# -- cost calculator ---------------------------------------------------------

@dataclass(frozen=True)
class ContractOpened:
    contract_id: str
    projected_cost: float


@dataclass(frozen=True)
class UsageTick:
    contract_id: str
    amount: float


@dataclass(frozen=True)
class ContractClosed:
    contract_id: str
    fee: float


BillingEvent = Union[ContractOpened, UsageTick, ContractClosed]


@dataclass(frozen=True)
class BillingState:
    """Budget split into spent, committed to open contracts, and remaining."""

    amount: float
    spent: float = 0.0
    commitments: Mapping[str, float] = field(default_factory=dict)
    ticked: Mapping[str, float] = field(default_factory=dict)

    @property
    def committed(self) -> float:
        return sum(self.commitments.values())

    @property
    def remaining(self) -> float:
        return self.amount - self.spent - self.committed


def update_billing(state: BillingState, event: Optional[BillingEvent]) -> BillingState:
    if event is None:
        return state
    commitments = dict(state.commitments)
    ticked = dict(state.ticked)
    cid = event.contract_id
    if isinstance(event, ContractOpened):
        if cid in commitments:
            raise ValueError(f"contract {cid} already open")
        if event.projected_cost > state.remaining + MONEY_EPS:
            raise BudgetBreach(f"commitment {event.projected_cost} exceeds remaining {state.remaining}")
        commitments[cid] = event.projected_cost
        ticked[cid] = 0.0
        return replace(state, commitments=commitments, ticked=ticked)
    if cid not in commitments:
        raise UnknownContract(cid)
    if isinstance(event, UsageTick):
        # usage draws the commitment down first, then the free remainder
        spent = state.spent + event.amount
        ticked[cid] += event.amount
        commitments[cid] = max(commitments[cid] - event.amount, 0.0)
    elif isinstance(event, ContractClosed):
        spent = state.spent + (event.fee - ticked.pop(cid))
        del commitments[cid]
    else:
        raise TypeError(f"unknown billing event {type(event).__name__}")
    new = replace(state, spent=spent, commitments=commitments, ticked=ticked)
    if new.spent > new.amount + MONEY_EPS:
        raise BudgetBreach(f"spent {new.spent} exceeds cap {new.amount}")
    return new


# -- capacity planner --------------------------------------------------------

@dataclass(frozen=True)
class HaPolicy:
    min_replicas: int = 2

    def __post_init__(self):
        if self.min_replicas < 1:
            raise ValueError("min_replicas must be at least 1")


@dataclass
class CapacityActions:
    """Outcome of one capacity-planning round for one service."""

    added_local: list[VmInstance] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    add_remote: int = 0
    decision: Optional[SliceDecision] = None
    degraded: bool = False

    @property
    def empty(self) -> bool:
        return not (self.added_local or self.removed or self.add_remote)


@dataclass
class CapacityPlanner:
    """Per-service replica planning within the local capacity bound and the budget.

    ``per_vm_throughput`` is requests one VM serves per slice;
    ``price_per_request`` is None when no public-cloud offer is available.
    """

    service_map: ServiceMap
    home_cloud: str
    images: dict[str, VmImageTemplate]
    per_vm_throughput: float

    def plan(self, service_id: str, app_ids: Sequence[str], demand_forecast: float,
             dc: Datacenter, budget_state: Optional[BillingState], ha_policy: HaPolicy = HaPolicy(),
             *, price_per_request: Optional[float] = None, slice_index: int = 0,
             exclude: Iterable[str] = (), pending_replacements: int = 0,
             at: float = 0.0) -> CapacityActions:
        actions = CapacityActions()
        excluded = set(exclude)
        local = sorted({r.vm_id: r for a in app_ids for r in self.service_map.replicas(a, self.home_cloud)
                        if r.vm_id not in excluded}.values(), key=lambda r: r.vm_id)
        need = max(ha_policy.min_replicas, math.ceil(demand_forecast / self.per_vm_throughput))
        have = len(local) + pending_replacements
        if have > need:
            # newest first; running replicas never drop below the floor
            surplus = min(have - need, len(local) - ha_policy.min_replicas)
            for r in local[::-1][:max(surplus, 0)]:
                actions.removed.append(r.vm_id)
        else:
            while have + len(actions.added_local) < need:
                try:
                    vm = dc.try_launch(self.images[service_id], app_ids=app_ids, at=at)
                except CapacityExceeded:
                    break
                actions.added_local.append(vm)
        n_local = len(local) - len(actions.removed) + len(actions.added_local)
        local_capacity = n_local * self.per_vm_throughput
        if price_per_request is None:
            # no qualifying offer: nothing can be bought
            price, budget = 1.0, 0.0
        else:
            price = price_per_request
            budget = math.inf if budget_state is None else max(budget_state.remaining, 0.0)
        plan = plan_outsourcing(WorkloadTrace(1.0, (demand_forecast,)), local_capacity, price,
                                BudgetCap(budget), integral=True, start_index=slice_index)
        d = plan.decisions[0]
        actions.decision = d
        actions.add_remote = math.ceil(d.outsourced_share / self.per_vm_throughput)
        actions.degraded = d.shortfall > 0
        return actions


def plan_capacity(planner: CapacityPlanner, app_id: str, demand_forecast: float, dc: Datacenter,
                  budget_state: Optional[BillingState], ha_policy: HaPolicy = HaPolicy(),
                  **kw) -> CapacityActions:
    return planner.plan(app_id, [app_id], demand_forecast, dc, budget_state, ha_policy, **kw)


# -- virtual resource manager ------------------------------------------------

@dataclass
class VirtualResourceManager:
    """Launches remote VMs in provider clouds under open contracts."""

    clouds: dict[str, Datacenter]
    ledger: BrokerLedger
    service_map: ServiceMap
    vm_contract: dict[str, str] = field(default_factory=dict)

    def open_contract_for(self, provider: str, spec: ResourceSpec):
        for c in self.ledger.contracts.values():
            if c.provider == provider and c.is_open and spec.fits_in(c.spec):
                return c
        return None

    def scale_out(self, image: VmImageTemplate, provider: str, app_ids: Sequence[str] = (),
                  *, contract_id: Optional[str] = None, at: float = 0.0) -> Replica:
        if contract_id is not None:
            c = self.ledger.contracts.get(contract_id)
            if c is None or not c.is_open or c.provider != provider or not image.spec.fits_in(c.spec):
                raise NoActiveContract(f"contract {contract_id} does not cover {image.spec} at {provider}")
        else:
            c = self.open_contract_for(provider, image.spec)
            if c is None:
                raise NoActiveContract(f"no open contract with {provider} covering {image.spec}")
        dc = self.clouds[provider]
        vm = dc.try_launch(image, app_ids=app_ids, at=at)
        node = dc.nodes[vm.host_node_id]
        rep = Replica(vm, node.endpoint, provider, c.contract_id)
        for a in app_ids:
            self.service_map.add(a, rep)
        self.vm_contract[vm.id] = c.contract_id
        return rep

    def accrue(self, vm_id: str, vm_hours: float) -> None:
        self.ledger.record_usage(self.vm_contract[vm_id], vm_hours)

    def release(self, vm_id: str) -> None:
        cloud = self.clouds[self.ledger.contract(self.vm_contract[vm_id]).provider]
        self.service_map.remove_vm(vm_id)
        vm = cloud.vms[vm_id]
        if vm.state in (VmState.RUNNING, VmState.FAILED):
            cloud.terminate(vm_id)


def scale_out(vrm: VirtualResourceManager, image: VmImageTemplate, provider: str, **kw) -> Replica:
    return vrm.scale_out(image, provider, **kw)
