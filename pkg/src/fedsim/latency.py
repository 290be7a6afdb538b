"""Provisioning time under private, restrained-federation and full-federation paths.

A request travels user -> gateway, is processed there, is dispatched to a
VM, processed, and the response travels VM -> user. Under a restrained
federation the home gateway forwards the request over the federation link
to the remote gateway first; under a full federation the user reaches the
remote gateway directly. Every hop costs distance / speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import InvalidSpeed
from .topology import LinkTable, NetEndpoint, distance, transfer_time


class Path(str, Enum):
    PRIVATE = "private"
    RESTRAINED = "restrained"
    FULL = "full"


@dataclass(frozen=True)
class GatewayProfile:
    endpoint: NetEndpoint
    processing_time: float = 0.0

    def __post_init__(self):
        _check_duration(self.processing_time, "gateway processing_time")


@dataclass(frozen=True)
class VmProfile:
    endpoint: NetEndpoint
    processing_time: float = 0.0

    def __post_init__(self):
        _check_duration(self.processing_time, "vm processing_time")


@dataclass(frozen=True)
class FederationLink:
    distance: float
    speed: float

    def __post_init__(self):
        if not (self.speed > 0 and math.isfinite(self.speed)):
            raise InvalidSpeed(f"federation speed must be positive, got {self.speed}")
        if not self.distance >= 0:
            raise ValueError(f"federation distance must be non-negative, got {self.distance}")


def _check_duration(v, what):
    if not (math.isfinite(v) and v >= 0):
        raise ValueError(f"{what} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class LatencyBreakdown:
    user_to_gateway: float
    gateway_processing: float
    federation_hop: float
    remote_gateway_processing: float
    gateway_to_vm: float
    vm_processing: float
    vm_to_user: float
    path: Path = Path.PRIVATE

    @property
    def components(self) -> tuple[float, ...]:
        return (self.user_to_gateway, self.gateway_processing, self.federation_hop,
                self.remote_gateway_processing, self.gateway_to_vm, self.vm_processing,
                self.vm_to_user)

    @property
    def total(self) -> float:
        acc = 0.0
        for c in self.components:
            acc += c
        return acc


COMPONENT_NAMES = tuple(f.name for f in fields(LatencyBreakdown) if f.name != "path")


def _hop(a: NetEndpoint, b: NetEndpoint, speeds: LinkTable, d: Optional[float] = None) -> float:
    if d is None:
        d = distance(a.coord, b.coord)
    return transfer_time(d, speeds.speed(a.id, b.id))


def provision_private(user: NetEndpoint, gw: GatewayProfile, vm: VmProfile,
                      speeds: LinkTable, *, gateway_to_vm_distance: Optional[float] = None,
                      path: Path = Path.PRIVATE) -> LatencyBreakdown:
    """Request served inside the cloud whose gateway the user contacts."""
    return LatencyBreakdown(
        user_to_gateway=_hop(user, gw.endpoint, speeds),
        gateway_processing=gw.processing_time,
        federation_hop=0.0,
        remote_gateway_processing=0.0,
        gateway_to_vm=_hop(gw.endpoint, vm.endpoint, speeds, gateway_to_vm_distance),
        vm_processing=vm.processing_time,
        vm_to_user=_hop(vm.endpoint, user, speeds),
        path=path,
    )


def provision_restrained(user: NetEndpoint, gw_a: GatewayProfile, link: FederationLink,
                         gw_b: GatewayProfile, vm_b: VmProfile, speeds_a: LinkTable,
                         speeds_b: Optional[LinkTable] = None, *,
                         gateway_to_vm_distance: Optional[float] = None) -> LatencyBreakdown:
    """Request enters through the home gateway and is rerouted to cloud B."""
    speeds_b = speeds_a if speeds_b is None else speeds_b
    return LatencyBreakdown(
        user_to_gateway=_hop(user, gw_a.endpoint, speeds_a),
        gateway_processing=gw_a.processing_time,
        federation_hop=transfer_time(link.distance, link.speed),
        remote_gateway_processing=gw_b.processing_time,
        gateway_to_vm=_hop(gw_b.endpoint, vm_b.endpoint, speeds_b, gateway_to_vm_distance),
        vm_processing=vm_b.processing_time,
        vm_to_user=_hop(vm_b.endpoint, user, speeds_b),
        path=Path.RESTRAINED,
    )


def provision_full(user: NetEndpoint, gw_b: GatewayProfile, vm_b: VmProfile,
                   speeds_b: LinkTable, *,
                   gateway_to_vm_distance: Optional[float] = None) -> LatencyBreakdown:
    """Request sent straight to cloud B's gateway."""
    return provision_private(user, gw_b, vm_b, speeds_b,
                             gateway_to_vm_distance=gateway_to_vm_distance, path=Path.FULL)


@dataclass(frozen=True)
class CloudPath:
    """Gateway, serving VM and link speeds of one cloud, as seen by a user."""

    gateway: GatewayProfile
    vm: VmProfile
    speeds: LinkTable


@dataclass(frozen=True)
class OutsourcingDecision:
    improves: bool
    private: LatencyBreakdown
    outsourced: LatencyBreakdown


def outsourcing_improves(user: NetEndpoint, cloud_a: CloudPath, cloud_b: CloudPath,
                         mode: Path | str, link: Optional[FederationLink] = None, *,
                         symmetric: bool = False) -> OutsourcingDecision:
    """Compare the home-cloud time with the time when cloud B serves the request.

    ``symmetric=True`` applies the same-VM-spec simplification: cloud B
    inherits cloud A's gateway and VM processing times and cloud A's
    gateway-to-VM distance.
    """
    mode = Path(mode)
    if mode is Path.PRIVATE:
        raise ValueError("mode must be restrained or full")
    t_a = provision_private(user, cloud_a.gateway, cloud_a.vm, cloud_a.speeds)
    gw_b, vm_b, d_rv = cloud_b.gateway, cloud_b.vm, None
    if symmetric:
        gw_b = replace(gw_b, processing_time=cloud_a.gateway.processing_time)
        vm_b = replace(vm_b, processing_time=cloud_a.vm.processing_time)
        d_rv = distance(cloud_a.gateway.endpoint.coord, cloud_a.vm.endpoint.coord)
    if mode is Path.FULL:
        t_b = provision_full(user, gw_b, vm_b, cloud_b.speeds, gateway_to_vm_distance=d_rv)
    else:
        if link is None:
            raise ValueError("restrained mode needs a federation link")
        t_b = provision_restrained(user, cloud_a.gateway, link, gw_b, vm_b, cloud_a.speeds,
                                   cloud_b.speeds, gateway_to_vm_distance=d_rv)
    return OutsourcingDecision(t_b.total < t_a.total, t_a, t_b)


def batch_totals(breakdowns: Sequence[LatencyBreakdown]) -> np.ndarray:
    """Totals for many breakdowns through the compiled path-sum kernel."""
    num = np.array([b.components for b in breakdowns], dtype=np.float64).reshape(-1, 7)
    return kernels.path_totals(num, np.ones_like(num))


def batch_provision(d_ur, w_ur, t_r, d_rv, w_rv, t_v, d_vu, w_vu,
                    d_fed=None, w_fed=None, t_rb=None) -> np.ndarray:
    """Vectorized provisioning totals from raw hop distances, speeds and times.

    Omitting the federation arguments gives the private/full shape; passing
    them gives the restrained shape. Term order matches
    :attr:`LatencyBreakdown.components`, so results equal ``.total`` exactly.
    """
    d_ur = np.asarray(d_ur, dtype=np.float64)
    n = d_ur.shape[0]
    zeros, ones = np.zeros(n), np.ones(n)

    def col(v, default):
        return default if v is None else np.broadcast_to(np.asarray(v, dtype=np.float64), (n,))

    for w in (w_ur, w_rv, w_vu) + ((w_fed,) if w_fed is not None else ()):
        if np.any(~(np.asarray(w) > 0)):
            raise InvalidSpeed("all speeds must be positive")
    num = np.column_stack([d_ur, col(t_r, zeros), col(d_fed, zeros), col(t_rb, zeros),
                           col(d_rv, zeros), col(t_v, zeros), col(d_vu, zeros)])
    den = np.column_stack([col(w_ur, ones), ones, col(w_fed, ones), ones,
                           col(w_rv, ones), ones, col(w_vu, ones)])
    return kernels.path_totals(num, den)
