"""Design checklists: split verifiable facts from constraints on the design."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from ..errors import InvalidChecklist


@dataclass(frozen=True)
class ChecklistItem:
    name: str
    verifiable: bool
    value: Any = None


@dataclass(frozen=True)
class Checklist:
    items: tuple[ChecklistItem, ...] = ()

    def __post_init__(self):
        names = [i.name for i in self.items]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise InvalidChecklist(f"duplicate checklist names: {', '.join(dupes)}")

    @classmethod
    def from_config(cls, entries: Iterable[dict]) -> "Checklist":
        items = []
        for e in entries:
            flag = e.get("verifiable", True)
            if isinstance(flag, str):
                flag = flag.strip().lower() in ("yes", "true", "y")
            items.append(ChecklistItem(str(e["name"]), bool(flag), e.get("value")))
        return cls(tuple(items))


@dataclass(frozen=True)
class Constraint:
    name: str
    value: Any = None
    # scenario setting this constraint implies, as (dotted key, value)
    implies: tuple = ()


@dataclass(frozen=True)
class Differentiation:
    verified: list[ChecklistItem] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)


# Known constraint names and the scenario settings they pin down.
IMPLIED = {
    "budget-cap": lambda v: (("scheduler.mode", "budget-constrained"),)
    + ((("scheduler.budget.amount", v),) if isinstance(v, (int, float)) else ()),
    "sla-latency": lambda v: (("sla", v),) if isinstance(v, (int, float)) else (),
}


def differentiate(checklist: Checklist) -> Differentiation:
    """Partition items by their verifiable flag, keeping input order."""
    if not isinstance(checklist, Checklist):
        checklist = Checklist.from_config(checklist)
    verified, constraints = [], []
    for item in checklist.items:
        if item.verifiable:
            verified.append(item)
        else:
            rule = IMPLIED.get(item.name)
            constraints.append(Constraint(item.name, item.value, rule(item.value) if rule else ()))
    return Differentiation(verified, constraints)
