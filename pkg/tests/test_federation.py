import io
import json

import pytest
from hypothesis import given, strategies as st

from fedsim.errors import InvalidTransition, NotAMember, UnknownContract
from fedsim.federation import (
    BrokerLedger,
    Bus,
    Contract,
    ContractEnd,
    ContractState,
    FeeConfirmation,
    Need,
    OutsourcingOffer,
    SlaObservation,
    StatusUpdate,
    WorkloadStatus,
    account,
    negotiate,
)
from fedsim.infrastructure import ResourceSpec

SPEC = ResourceSpec(2, 2048, 20)


def contract(cid="C1", provider="B", price=2.0):
    return Contract(cid, provider, "A", SPEC, 1.0, price)


def test_bus_broadcasts_once_to_every_other_member():
    bus = Bus(["A", "B", "C"], latency=0.5)
    got = []
    bus.subscribe("A", lambda m: got.append(("A", m.seq)))
    bus.subscribe("C", lambda m: got.append(("C", m.seq)))
    ds = bus.publish("B", StatusUpdate((SPEC,), 1.0, 60.0, 1.0), at=2.0)
    assert sorted(d.receiver for d in ds) == ["A", "C"]
    assert all(d.deliver_at == 2.5 for d in ds)
    assert bus.flush() == 2
    assert got == [("A", 1), ("C", 1)]
    assert bus.inbox["B"] == []
    bus.publish("B", WorkloadStatus("C1", 1, 0))
    assert [d.message.seq for d in bus.pending] == [2, 2]


def test_non_member_rejected():
    bus = Bus(["A"])
    with pytest.raises(NotAMember):
        bus.publish("Z", ContractEnd("C1"))


def test_bus_dump_is_json_lines():
    bus = Bus(["A", "B"])
    bus.publish("A", ContractEnd("C1"))
    bus.flush()
    fp = io.StringIO()
    bus.dump_ndjson(fp)
    rec = json.loads(fp.getvalue())
    assert rec["kind"] == "ContractEnd" and rec["receiver"] == "B"


def test_state_machine_happy_path():
    c = contract()
    c.confirm()
    c.initiate(10.0)
    c.accrue(1.5)
    c.finish(20.0)
    assert c.state is ContractState.ENDED and (c.start, c.end) == (10.0, 20.0)
    assert c.due_fee == 3.0


TRANSITIONS = [ContractState.CONFIRMED, ContractState.INITIATED, ContractState.ENDED, ContractState.OFFERED]


@given(st.lists(st.sampled_from(TRANSITIONS), max_size=8))
def test_state_machine_rejects_out_of_order(seq):
    c = contract()
    order = [ContractState.OFFERED, ContractState.CONFIRMED, ContractState.INITIATED, ContractState.ENDED]
    for to in seq:
        legal = order.index(c.state) + 1 < len(order) and order[order.index(c.state) + 1] is to
        if legal:
            c.advance(to, at=1.0)
            assert c.state is to
        else:
            before = c.state
            with pytest.raises(InvalidTransition):
                c.advance(to, at=1.0)
            assert c.state is before


def test_accrue_only_while_initiated():
    c = contract()
    with pytest.raises(InvalidTransition):
        c.accrue(1.0)
    c.confirm()
    c.initiate(0.0)
    with pytest.raises(ValueError):
        c.accrue(-1.0)


def test_negotiate_cheapest_feasible():
    offers = [OutsourcingOffer("o1", SPEC, 1.0, 60, 3.0, "B"),
              OutsourcingOffer("o2", ResourceSpec(1, 1024, 10), 1.0, 60, 1.0, "B"),
              OutsourcingOffer("o3", SPEC, 1.0, 60, 2.0, "D"),
              OutsourcingOffer("o4", SPEC, 1.0, 60, 2.0, "C"),
              OutsourcingOffer("o5", SPEC, 5.0, 60, 0.1, "E")]
    assert negotiate(offers, Need(SPEC, 1.0)).offer_id == "o4"
    assert negotiate(offers, Need(ResourceSpec(9, 1, 1), 1.0)) is None


def test_ledger_revenue_and_discrepancy():
    led = BrokerLedger()
    c = led.open(contract())
    c.confirm()
    c.initiate(0.0)
    led.record_usage("C1", 2.0)
    account(led, SlaObservation("C1", 0.3, False))
    account(led, SlaObservation("C1", 3.0, True))
    account(led, ContractEnd("C1"), at=5.0)
    assert led.revenue["B"] == 4.0 and led.due["C1"] == 4.0
    account(led, FeeConfirmation("C1", 4.0))
    assert led.discrepancies == {}
    assert led.sla_violations["C1"] == 1 and led.sla_observations["C1"] == 2
    assert led.conservation_gap() == 0.0
    with pytest.raises(UnknownContract):
        account(led, ContractEnd("nope"))


def test_fee_mismatch_is_recorded():
    led = BrokerLedger()
    c = led.open(contract())
    c.confirm()
    c.initiate(0.0)
    c.accrue(1.0)
    with pytest.raises(InvalidTransition):
        account(led, FeeConfirmation("C1", 2.0))
    account(led, ContractEnd("C1"), at=1.0)
    account(led, FeeConfirmation("C1", 1.5))
    assert led.discrepancies == {"C1": 0.5}


@given(st.lists(st.tuples(st.sampled_from("BCD"), st.floats(0, 10), st.lists(st.floats(0, 5), max_size=5)),
                max_size=12))
def test_revenue_conservation(specs):
    led = BrokerLedger()
    for i, (p, price, ticks) in enumerate(specs):
        c = led.open(contract(f"C{i}", p, price))
        c.confirm()
        c.initiate(0.0)
        for t in ticks:
            led.record_usage(c.contract_id, t)
        account(led, ContractEnd(c.contract_id), at=1.0)
    assert led.conservation_gap() <= 1e-9
