"""Legacy-to-cloud transformation of a private datacenter.

The pipeline classifies applications by operating system, consolidates them
into VM bundles, picks an image template per bundle, plans placement with
first-fit-decreasing over the compute nodes, launches the instances and
links every bundle back to the storage assignments of its applications.
Planning finishes before anything is launched, and a failure during launch
rolls back, so the datacenter ledger is never left half-transformed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .errors import (
    CapacityExceeded,
    EmptyDatacenter,
    MissingStorageAssignment,
    NoFittingTemplate,
    PlacementInfeasible,
)
from .infrastructure import (
    Datacenter,
    NodeRole,
    OsKind,
    ResourceSpec,
    StorageAssignment,
    VmImageTemplate,
    VmInstance,
    sum_specs,
)


@dataclass(frozen=True)
class Application:
    id: str
    os: OsKind
    demand: ResourceSpec
    colocation_tag: Optional[str] = None

    def __post_init__(self):
        self.demand.require_positive()


@dataclass(frozen=True)
class VmBundle:
    id: str
    os: OsKind
    app_ids: tuple[str, ...]
    demand: ResourceSpec


class ColocationPolicy(str, Enum):
    SINGLETON = "singleton"
    BY_TAG = "by-tag"


@dataclass
class PlacementPlan:
    assignments: dict[str, str] = field(default_factory=dict)
    images: dict[str, VmImageTemplate] = field(default_factory=dict)
    storage_links: list[tuple[str, StorageAssignment]] = field(default_factory=list)
    bundles: dict[str, VmBundle] = field(default_factory=dict)
    # Image repository location; a plan attribute only.
    repository_node_id: Optional[str] = None


@dataclass
class TransformResult:
    plan: PlacementPlan
    instances: list[VmInstance]


def classify_by_os(apps: Iterable[Application]) -> dict[OsKind, list[Application]]:
    """Partition applications by OS. Classes are keyed in OS-name order."""
    classes: dict[OsKind, list[Application]] = {}
    for app in apps:
        classes.setdefault(app.os, []).append(app)
    return {os: classes[os] for os in sorted(classes, key=lambda o: o.name)}


def consolidate(classes: dict[OsKind, list[Application]],
                policy: ColocationPolicy = ColocationPolicy.SINGLETON) -> list[VmBundle]:
    policy = ColocationPolicy(policy)
    bundles = []
    for os, apps in classes.items():
        groups: dict[str, list[Application]] = {}
        for app in apps:
            if app.os != os:
                raise ValueError(f"application {app.id} is not in OS class {os}")
            if policy is ColocationPolicy.BY_TAG and app.colocation_tag is not None:
                key = f"b-{os.name}-{app.colocation_tag}"
            else:
                key = f"b-{app.id}"
            groups.setdefault(key, []).append(app)
        for key, members in groups.items():
            bundles.append(VmBundle(key, os, tuple(a.id for a in members),
                                    sum_specs(a.demand for a in members)))
    return bundles


def select_template(bundle: VmBundle, templates: Sequence[VmImageTemplate]) -> VmImageTemplate:
    """Smallest same-OS template dominating the bundle demand.

    "Smallest" is lexicographic on (cpu, mem, disk); template id breaks ties.
    """
    fitting = [t for t in templates if t.os == bundle.os and bundle.demand.fits_in(t.spec)]
    if not fitting:
        raise NoFittingTemplate(f"no {bundle.os} template holds {bundle.demand} for {bundle.id}")
    return min(fitting, key=lambda t: (t.spec.as_tuple(), t.id))


def plan_placement(bundles: Sequence[tuple[VmBundle, VmImageTemplate]],
                   dc: Datacenter) -> PlacementPlan:
    computes = dc.compute_nodes
    if not computes:
        raise EmptyDatacenter(f"datacenter {dc.id} has no compute nodes")
    # Tentative utilization; the datacenter itself is not touched.
    used = {n.id: n.utilization for n in computes}
    cap = {n.id: n.capacity for n in computes}

    def ratio(nid):
        u, c = used[nid], cap[nid]
        return max(u.cpu / c.cpu, u.mem / c.mem, u.disk / c.disk)

    order = sorted(bundles, key=lambda bi: (-bi[1].spec.mem, -bi[1].spec.cpu, bi[0].id))
    plan = PlacementPlan()
    for bundle, image in order:
        spec = image.spec
        target = None
        for nid in sorted(used, key=lambda nid: (ratio(nid), nid)):
            if spec.fits_in(cap[nid] - used[nid]):
                target = nid
                break
        if target is None:
            raise PlacementInfeasible(bundle.id, {nid: cap[nid] - used[nid] for nid in sorted(used)})
        used[target] = used[target] + spec
        plan.assignments[bundle.id] = target
        plan.images[bundle.id] = image
        plan.bundles[bundle.id] = bundle
    return plan


def _storage_index(dc: Datacenter, apps: Sequence[Application],
                   storage: Sequence[StorageAssignment]) -> dict[str, StorageAssignment]:
    by_app: dict[str, StorageAssignment] = {}
    for sa in storage:
        if sa.app_id in by_app:
            raise MissingStorageAssignment(f"application {sa.app_id} has more than one storage assignment")
        by_app[sa.app_id] = sa
    for app in apps:
        sa = by_app.get(app.id)
        if sa is None:
            raise MissingStorageAssignment(f"application {app.id} has no storage assignment")
        node = dc.nodes.get(sa.storage_node_id)
        if node is None or node.role is not NodeRole.STORAGE:
            raise MissingStorageAssignment(
                f"application {app.id} references {sa.storage_node_id}, which is not a storage node")
    return by_app


def transform(dc: Datacenter, apps: Sequence[Application], storage: Sequence[StorageAssignment],
              templates: Sequence[VmImageTemplate],
              policy: ColocationPolicy = ColocationPolicy.SINGLETON, *, at: float = 0.0) -> TransformResult:
    """Run the full pipeline and launch one instance per bundle."""
    if not apps:
        return TransformResult(PlacementPlan(), [])
    n_storage, n_total = len(dc.storage_nodes), len(dc.nodes)
    if n_storage < 1 or n_storage >= n_total:
        raise MissingStorageAssignment(
            f"need 1 <= storage nodes < nodes, got {n_storage} of {n_total}")
    by_app = _storage_index(dc, apps, storage)

    bundles = consolidate(classify_by_os(apps), policy)
    with_images = [(b, select_template(b, templates)) for b in bundles]
    plan = plan_placement(with_images, dc)
    plan.repository_node_id = dc.storage_nodes[0].id
    for b in bundles:
        for app_id in b.app_ids:
            plan.storage_links.append((b.id, by_app[app_id]))

    launched: list[VmInstance] = []
    try:
        for b in bundles:
            launched.append(dc.try_launch(plan.images[b.id], node_id=plan.assignments[b.id],
                                          app_ids=b.app_ids, at=at))
    except CapacityExceeded:
        for vm in launched:
            dc.terminate(vm.id)
            del dc.vms[vm.id]
        raise
    return TransformResult(plan, launched)
