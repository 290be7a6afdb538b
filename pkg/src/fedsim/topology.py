"""Network-coordinate plane: endpoints, distances, link speeds, transfer times.

Hosts are embedded in a 2-D Euclidean plane; the distance between two
coordinates stands in for network distance. Speeds are per ordered
endpoint pair, with a default for pairs not listed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import InvalidCoordinate, InvalidSpeed


@dataclass(frozen=True)
class Coordinate:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidCoordinate(f"non-finite coordinate ({self.x}, {self.y})")

    @classmethod
    def of(cls, value) -> "Coordinate":
        """Build from a Coordinate, an ``(x, y)`` pair or an ``{x:, y:}`` map."""
        if isinstance(value, Coordinate):
            return value
        if isinstance(value, Mapping):
            return cls(float(value["x"]), float(value["y"]))
        x, y = value
        return cls(float(x), float(y))


class Role(str, Enum):
    USER = "user"
    GATEWAY = "gateway"
    COMPUTE = "compute-node"
    STORAGE = "storage-node"


@dataclass(frozen=True)
class NetEndpoint:
    id: str
    coord: Coordinate
    role: Role = Role.COMPUTE


def distance(a: Coordinate, b: Coordinate) -> float:
    """Euclidean distance between two plane coordinates."""
    for c in (a, b):
        if not (math.isfinite(c.x) and math.isfinite(c.y)):
            raise InvalidCoordinate(f"non-finite coordinate ({c.x}, {c.y})")
    return math.hypot(b.x - a.x, b.y - a.y)


def transfer_time(d: float, s: float) -> float:
    """Seconds needed to cover distance ``d`` at speed ``s``."""
    if not s > 0 or not math.isfinite(s):
        raise InvalidSpeed(f"speed must be positive and finite, got {s}")
    if d < 0:
        raise ValueError(f"distance must be non-negative, got {d}")
    return d / s


@dataclass
class LinkTable:
    """Speeds for ordered endpoint pairs, falling back to ``default``."""

    default: float = 1.0
    speeds: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        _check_speed(self.default)
        for pair, s in self.speeds.items():
            _check_speed(s, pair)

    def set(self, a: str, b: str, speed: float) -> None:
        _check_speed(speed, (a, b))
        self.speeds[(a, b)] = speed

    def speed(self, a: str, b: str) -> float:
        return self.speeds.get((a, b), self.default)


def _check_speed(s, pair=None):
    if not (isinstance(s, (int, float)) and s > 0 and math.isfinite(s)):
        where = f" for link {pair[0]}->{pair[1]}" if pair else ""
        raise InvalidSpeed(f"speed must be positive and finite{where}, got {s}")
