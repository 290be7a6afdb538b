"""Federation bus, message catalogue, contracts and the edge broker's ledger."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, is_dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Union

from .errors import InvalidTransition, NotAMember, UnknownContract
from .infrastructure import ResourceSpec


# -- message bodies ----------------------------------------------------------

@dataclass(frozen=True)
class StatusUpdate:
    supported_specs: tuple[ResourceSpec, ...]
    supported_sla: float
    contract_duration: float
    price_per_vm_hour: float


@dataclass(frozen=True)
class WorkloadStatus:
    contract_id: str
    completed: int
    pending: int


@dataclass(frozen=True)
class OutsourcingOffer:
    offer_id: str
    spec: ResourceSpec
    sla: float
    duration: float
    price_per_vm_hour: float
    provider: str = ""


@dataclass(frozen=True)
class OutsourcingConfirmation:
    offer_id: str


@dataclass(frozen=True)
class ContractInitiation:
    contract_id: str
    offer_id: str


@dataclass(frozen=True)
class ContractEnd:
    contract_id: str


@dataclass(frozen=True)
class FeeConfirmation:
    contract_id: str
    amount: float

    def __post_init__(self):
        if not self.amount >= 0:
            raise ValueError(f"fee must be non-negative, got {self.amount}")


@dataclass(frozen=True)
class SlaObservation:
    """Broker-side observation of one request served under a contract."""

    contract_id: str
    latency: float
    violated: bool


Body = Union[StatusUpdate, WorkloadStatus, OutsourcingOffer, OutsourcingConfirmation,
             ContractInitiation, ContractEnd, FeeConfirmation]


@dataclass(frozen=True)
class FederationMessage:
    seq: int
    sender: str
    at: float
    body: Body

    @property
    def kind(self) -> str:
        return type(self.body).__name__


# -- bus ---------------------------------------------------------------------

@dataclass(frozen=True)
class Delivery:
    receiver: str
    message: FederationMessage
    deliver_at: float


class Bus:
    """Broadcast bus: each message reaches every other member exactly once.

    ``publish`` creates the deliveries; the owner (normally the simulation
    engine) hands each back to :meth:`deliver` at ``deliver_at``. Without an
    engine, :meth:`flush` delivers everything pending in order.
    """

    def __init__(self, members: Iterable[str] = (), latency: float = 0.0):
        if not latency >= 0:
            raise ValueError("bus latency must be non-negative")
        self.latency = latency
        self.members: list[str] = []
        self._seq: dict[str, int] = {}
        self._handlers: dict[str, list[Callable[[FederationMessage], None]]] = defaultdict(list)
        self.inbox: dict[str, list[FederationMessage]] = {}
        self.pending: list[Delivery] = []
        self.log: list[Delivery] = []
        for m in members:
            self.register(m)

    def register(self, member: str) -> None:
        if member in self._seq:
            raise ValueError(f"{member} already registered")
        self.members.append(member)
        self._seq[member] = 0
        self.inbox[member] = []

    def subscribe(self, member: str, handler: Callable[[FederationMessage], None]) -> None:
        if member not in self._seq:
            raise NotAMember(member)
        self._handlers[member].append(handler)

    def publish(self, sender: str, body: Body, at: float = 0.0) -> list[Delivery]:
        if sender not in self._seq:
            raise NotAMember(f"{sender} is not a bus member")
        self._seq[sender] += 1
        msg = FederationMessage(self._seq[sender], sender, at, body)
        out = [Delivery(m, msg, at + self.latency) for m in self.members if m != sender]
        self.pending.extend(out)
        return out

    def deliver(self, d: Delivery) -> None:
        self.pending.remove(d)
        self.inbox[d.receiver].append(d.message)
        self.log.append(d)
        for h in self._handlers.get(d.receiver, ()):
            h(d.message)

    def flush(self) -> int:
        n = 0
        while self.pending:
            self.deliver(self.pending[0])
            n += 1
        return n

    def dump_ndjson(self, fp) -> None:
        """One JSON record per delivery."""
        for d in self.log:
            fp.write(json.dumps(delivery_record(d), sort_keys=True) + "\n")


def _plain(v):
    if is_dataclass(v):
        return {k: _plain(x) for k, x in asdict(v).items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float):
        return float(f"{v:.9g}")
    return v


def delivery_record(d: Delivery) -> dict:
    m = d.message
    return {"deliver_at": _plain(d.deliver_at), "receiver": d.receiver, "sender": m.sender,
            "seq": m.seq, "sent_at": _plain(m.at), "kind": m.kind, "body": _plain(m.body)}


def publish(bus: Bus, sender: str, body: Body, at: float = 0.0) -> list[Delivery]:
    return bus.publish(sender, body, at)


# -- contracts ---------------------------------------------------------------

class ContractState(str, Enum):
    OFFERED = "offered"
    CONFIRMED = "confirmed"
    INITIATED = "initiated"
    ENDED = "ended"


_NEXT = {
    ContractState.OFFERED: ContractState.CONFIRMED,
    ContractState.CONFIRMED: ContractState.INITIATED,
    ContractState.INITIATED: ContractState.ENDED,
}


@dataclass
class Contract:
    contract_id: str
    provider: str
    consumer: str
    spec: ResourceSpec
    sla: float
    price_per_vm_hour: float
    offer_id: str = ""
    start: Optional[float] = None
    end: Optional[float] = None
    vm_hours_used: float = 0.0
    state: ContractState = ContractState.OFFERED

    def advance(self, to: ContractState, at: Optional[float] = None) -> None:
        to = ContractState(to)
        if _NEXT.get(self.state) is not to:
            raise InvalidTransition(f"contract {self.contract_id}: {self.state.value} -> {to.value}")
        if to is ContractState.INITIATED:
            self.start = at
        elif to is ContractState.ENDED:
            if self.start is not None and at is not None and at < self.start:
                raise InvalidTransition(f"contract {self.contract_id} cannot end before it starts")
            self.end = at
        self.state = to

    def confirm(self):
        self.advance(ContractState.CONFIRMED)

    def initiate(self, at: float):
        self.advance(ContractState.INITIATED, at)

    def finish(self, at: float):
        self.advance(ContractState.ENDED, at)

    @property
    def is_open(self) -> bool:
        return self.state is ContractState.INITIATED

    def accrue(self, vm_hours: float) -> None:
        if not vm_hours >= 0:
            raise ValueError("vm-hours accrue monotonically")
        if self.state is not ContractState.INITIATED:
            raise InvalidTransition(f"contract {self.contract_id} is not running")
        self.vm_hours_used += vm_hours

    @property
    def due_fee(self) -> float:
        return self.price_per_vm_hour * self.vm_hours_used


# -- broker ------------------------------------------------------------------

@dataclass
class Need:
    spec: ResourceSpec
    sla: float


def negotiate(offers: Sequence[OutsourcingOffer], need: Need) -> Optional[OutsourcingOffer]:
    """Cheapest offer whose spec covers the need and whose SLA is at least as tight."""
    feasible = [o for o in offers if need.spec.fits_in(o.spec) and o.sla <= need.sla]
    if not feasible:
        return None
    return min(feasible, key=lambda o: (o.price_per_vm_hour, o.provider, o.offer_id))


@dataclass
class BrokerLedger:
    contracts: dict[str, Contract] = field(default_factory=dict)
    sla_violations: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    sla_observations: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    revenue: dict[str, float] = field(default_factory=lambda: defaultdict(float))
    due: dict[str, float] = field(default_factory=dict)
    fees_confirmed: dict[str, float] = field(default_factory=dict)
    discrepancies: dict[str, float] = field(default_factory=dict)
    workload: dict[str, tuple[int, int]] = field(default_factory=dict)

    def contract(self, contract_id: str) -> Contract:
        try:
            return self.contracts[contract_id]
        except KeyError:
            raise UnknownContract(contract_id) from None

    def open(self, contract: Contract) -> Contract:
        self.contracts[contract.contract_id] = contract
        return contract

    def record_usage(self, contract_id: str, vm_hours: float) -> None:
        self.contract(contract_id).accrue(vm_hours)

    def conservation_gap(self) -> float:
        """Largest |revenue - sum(price * vm_hours)| over providers."""
        expected: dict[str, float] = defaultdict(float)
        for c in self.contracts.values():
            if c.state is ContractState.ENDED:
                expected[c.provider] += c.price_per_vm_hour * c.vm_hours_used
        providers = set(expected) | set(self.revenue)
        return max((abs(self.revenue.get(p, 0.0) - expected.get(p, 0.0)) for p in providers),
                   default=0.0)


Event = Union[ContractEnd, FeeConfirmation, WorkloadStatus, SlaObservation]


def account(ledger: BrokerLedger, event: Event, at: Optional[float] = None) -> BrokerLedger:
    """Apply one bus or observation event to the broker ledger (in place)."""
    c = ledger.contract(event.contract_id)
    if isinstance(event, ContractEnd):
        if c.state is not ContractState.ENDED:
            c.finish(at if at is not None else c.start)
        fee = c.due_fee
        ledger.due[c.contract_id] = fee
        ledger.revenue[c.provider] += fee
    elif isinstance(event, FeeConfirmation):
        if c.contract_id not in ledger.due:
            raise InvalidTransition(f"fee confirmed for contract {c.contract_id} before it ended")
        ledger.fees_confirmed[c.contract_id] = event.amount
        gap = ledger.due[c.contract_id] - event.amount
        if not math.isclose(gap, 0.0, abs_tol=1e-12):
            ledger.discrepancies[c.contract_id] = gap
    elif isinstance(event, WorkloadStatus):
        ledger.workload[c.contract_id] = (event.completed, event.pending)
    elif isinstance(event, SlaObservation):
        ledger.sla_observations[c.contract_id] += 1
        if event.violated:
            ledger.sla_violations[c.contract_id] += 1
    else:
        raise TypeError(f"broker cannot account {type(event).__name__}")
    return ledger
