"""Physical datacenter inventory, VM images and instances, capacity bound.

A :class:`Datacenter` is the single-owner ledger of committed resources.
``try_launch`` either places an instance on a compute node with enough
residual capacity or raises :class:`CapacityExceeded` and leaves the ledger
untouched, so the number of running VMs of a uniform spec can never exceed
the sum of per-node maxima.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from .errors import (
    CapacityExceeded,
    EmptyDatacenter,
    InvalidResources,
    UnknownVm,
    WrongNodeRole,
)
from .topology import Coordinate, NetEndpoint, Role


@dataclass(frozen=True, order=True)
class ResourceSpec:
    """CPU count, memory in MiB and disk in GiB.

    Zero components are allowed so the same type can carry committed
    utilization; templates, demands and capacities call
    :meth:`require_positive`.
    """

    cpu: int
    mem: int
    disk: int

    def __post_init__(self):
        for name in ("cpu", "mem", "disk"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise InvalidResources(f"{name} must be a non-negative integer, got {v!r}")

    @classmethod
    def zero(cls) -> "ResourceSpec":
        return cls(0, 0, 0)

    @classmethod
    def of(cls, value) -> "ResourceSpec":
        if isinstance(value, ResourceSpec):
            return value
        if isinstance(value, dict):
            return cls(value["cpu"], value["mem"], value["disk"])
        return cls(*value)

    def require_positive(self) -> "ResourceSpec":
        if min(self.cpu, self.mem, self.disk) <= 0:
            raise InvalidResources(f"all components must be positive: {self}")
        return self

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.cpu, self.mem, self.disk)

    def fits_in(self, other: "ResourceSpec") -> bool:
        """True when every component is <= the matching one of ``other``."""
        return self.cpu <= other.cpu and self.mem <= other.mem and self.disk <= other.disk

    def __add__(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(self.cpu + other.cpu, self.mem + other.mem, self.disk + other.disk)

    def __sub__(self, other: "ResourceSpec") -> "ResourceSpec":
        return ResourceSpec(self.cpu - other.cpu, self.mem - other.mem, self.disk - other.disk)

    def __str__(self):
        return f"({self.cpu} cpu, {self.mem} MiB, {self.disk} GiB)"


def sum_specs(specs: Iterable[ResourceSpec]) -> ResourceSpec:
    total = ResourceSpec.zero()
    for s in specs:
        total = total + s
    return total


@dataclass(frozen=True)
class OsKind:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class VmImageTemplate:
    id: str
    os: OsKind
    spec: ResourceSpec

    def __post_init__(self):
        self.spec.require_positive()


class NodeRole(str, Enum):
    COMPUTE = "compute"
    STORAGE = "storage"


@dataclass
class PhysicalNode:
    id: str
    endpoint: NetEndpoint
    capacity: ResourceSpec
    role: NodeRole = NodeRole.COMPUTE
    utilization: ResourceSpec = field(default_factory=ResourceSpec.zero)

    def __post_init__(self):
        self.role = NodeRole(self.role)
        self.capacity.require_positive()

    @classmethod
    def make(cls, id, coord=(0.0, 0.0), capacity=(8, 16384, 400), role="compute"):
        role = NodeRole(role)
        ep_role = Role.COMPUTE if role is NodeRole.COMPUTE else Role.STORAGE
        return cls(id, NetEndpoint(id, Coordinate.of(coord), ep_role),
                   ResourceSpec.of(capacity), role)

    @property
    def residual(self) -> ResourceSpec:
        return self.capacity - self.utilization

    @property
    def utilization_ratio(self) -> float:
        """Dominant share: the largest committed fraction over all resources."""
        u, c = self.utilization, self.capacity
        return max(u.cpu / c.cpu, u.mem / c.mem, u.disk / c.disk)


@dataclass(frozen=True)
class StorageAssignment:
    app_id: str
    storage_node_id: str
    space: int


class VmState(str, Enum):
    LAUNCHING = "launching"
    RUNNING = "running"
    FAILED = "failed"
    TERMINATED = "terminated"


@dataclass
class VmInstance:
    id: str
    image: VmImageTemplate
    host_node_id: str
    hosted_app_ids: list[str] = field(default_factory=list)
    state: VmState = VmState.RUNNING
    cloud_id: str = ""
    launched_at: float = 0.0

    @property
    def spec(self) -> ResourceSpec:
        return self.image.spec

    @property
    def running(self) -> bool:
        return self.state is VmState.RUNNING


@dataclass(frozen=True)
class CapacityModel:
    per_node: dict
    per_node_max: int
    datacenter_max: int


def per_node_max(node: PhysicalNode, spec: ResourceSpec) -> int:
    """How many VMs of ``spec`` fit on an empty ``node``."""
    if node.role is not NodeRole.COMPUTE:
        raise WrongNodeRole(f"node {node.id} has role {node.role.value}")
    spec.require_positive()
    c = node.capacity
    return min(c.cpu // spec.cpu, c.mem // spec.mem, c.disk // spec.disk)


def datacenter_capacity(nodes: Iterable[PhysicalNode], spec: ResourceSpec) -> CapacityModel:
    per_node = {n.id: per_node_max(n, spec) for n in nodes if n.role is NodeRole.COMPUTE}
    if not per_node:
        raise EmptyDatacenter("datacenter has no compute nodes")
    return CapacityModel(per_node, max(per_node.values()), sum(per_node.values()))


PlacementPolicy = Callable[[Sequence[PhysicalNode], ResourceSpec], Optional[PhysicalNode]]


def first_fit(nodes: Sequence[PhysicalNode], spec: ResourceSpec) -> Optional[PhysicalNode]:
    """First compute node, by id, whose residual capacity holds ``spec``."""
    for n in sorted(nodes, key=lambda n: n.id):
        if spec.fits_in(n.residual):
            return n
    return None


def least_utilized(nodes: Sequence[PhysicalNode], spec: ResourceSpec) -> Optional[PhysicalNode]:
    """Fitting node with the lowest dominant utilization share, ties by id."""
    for n in sorted(nodes, key=lambda n: (n.utilization_ratio, n.id)):
        if spec.fits_in(n.residual):
            return n
    return None


class Datacenter:
    """Compute and storage nodes of one cloud plus the VMs running on them."""

    def __init__(self, id: str, nodes: Iterable[PhysicalNode] = ()):
        self.id = id
        self.nodes: dict[str, PhysicalNode] = {}
        self.vms: dict[str, VmInstance] = {}
        self._ids = itertools.count(1)
        for n in nodes:
            self.add_node(n)

    def add_node(self, node: PhysicalNode) -> None:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node

    @property
    def compute_nodes(self) -> list[PhysicalNode]:
        return [n for n in self.nodes.values() if n.role is NodeRole.COMPUTE]

    @property
    def storage_nodes(self) -> list[PhysicalNode]:
        return [n for n in self.nodes.values() if n.role is NodeRole.STORAGE]

    def ledger(self) -> dict[str, ResourceSpec]:
        """Snapshot of committed utilization per node."""
        return {n.id: n.utilization for n in self.nodes.values()}

    def running(self) -> list[VmInstance]:
        return [vm for vm in self.vms.values() if vm.state is VmState.RUNNING]

    def capacity_for(self, spec: ResourceSpec) -> CapacityModel:
        return datacenter_capacity(self.nodes.values(), spec)

    def try_launch(self, image: VmImageTemplate, placement_policy: PlacementPolicy = least_utilized,
                   *, node_id: str | None = None, app_ids: Sequence[str] = (),
                   at: float = 0.0) -> VmInstance:
        computes = self.compute_nodes
        if not computes:
            raise EmptyDatacenter(f"datacenter {self.id} has no compute nodes")
        spec = image.spec
        if node_id is not None:
            node = self.nodes.get(node_id)
            if node is None or node.role is not NodeRole.COMPUTE:
                raise WrongNodeRole(f"{node_id} is not a compute node of {self.id}")
            if not spec.fits_in(node.residual):
                node = None
        else:
            node = placement_policy(computes, spec)
        if node is None:
            raise CapacityExceeded(f"no node in {self.id} can host {spec}")
        node.utilization = node.utilization + spec
        vm = VmInstance(f"{self.id}-vm{next(self._ids):04d}", image, node.id, list(app_ids),
                        VmState.RUNNING, self.id, at)
        self.vms[vm.id] = vm
        return vm

    def fail(self, vm_id: str) -> VmInstance:
        """Mark a running VM failed. Its resources stay committed until terminated."""
        vm = self.vms.get(vm_id)
        if vm is None or vm.state is not VmState.RUNNING:
            raise UnknownVm(vm_id)
        vm.state = VmState.FAILED
        return vm

    def terminate(self, vm_id: str) -> ResourceSpec:
        vm = self.vms.get(vm_id)
        if vm is None or vm.state not in (VmState.RUNNING, VmState.FAILED):
            raise UnknownVm(vm_id)
        node = self.nodes[vm.host_node_id]
        node.utilization = node.utilization - vm.spec
        vm.state = VmState.TERMINATED
        return vm.spec


# Functional aliases mirroring the operation names.
def try_launch(dc: Datacenter, image: VmImageTemplate,
               placement_policy: PlacementPolicy = least_utilized, **kw) -> VmInstance:
    return dc.try_launch(image, placement_policy, **kw)


def terminate(dc: Datacenter, vm_id: str) -> ResourceSpec:
    return dc.terminate(vm_id)
