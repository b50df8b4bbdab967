import numpy as np
import pytest

from iotgraph.power import DepletedEnergyError
from iotgraph.rateopt import (RateInstance, solve_rate_allocation, objective_G,
                              error_probability_proxy, check_flow,
                              InfeasibleFlowError)


def _instance(capacities, supplies=None, nodes=None, source=0, gateway=9):
    nodes = nodes or tuple(sorted({v for e in capacities for v in e}))
    return RateInstance(nodes=nodes, capacities=capacities,
                        supplies=supplies or {}, source=source, gateway=gateway,
                        range_m=1.0, energy=1.0, d=1.0)


def test_boundary_nodes_cannot_carry_supply():
    with pytest.raises(InfeasibleFlowError):
        _instance({(0, 9): 1.0}, supplies={0: 1.0})   # 0 is the source


def test_max_direction_hand_value():
    # [DERIVED] source 0 relays through 1 to gateway 9; the 0->1 flow is
    # limited by min(cap(0,1), cap(1,9)) = 0.3; direct 0->9 caps at 0.4.
    caps = {(0, 1): 0.5, (1, 9): 0.3, (0, 9): 0.4}
    alloc = solve_rate_allocation(_instance(caps))
    assert alloc.q == pytest.approx(0.4, abs=1e-9)
    assert alloc.binding_link == (0, 9)
    assert check_flow(_instance(caps), alloc.flows, tol=1e-7)


def test_max_circulation():
    # [DERIVED] cycle 0->1->2->0 with min capacity 0.25 bounds every flow
    caps = {(0, 1): 0.5, (1, 2): 0.25, (2, 0): 0.6}
    alloc = solve_rate_allocation(_instance(caps, gateway=2))
    assert alloc.q == pytest.approx(0.25, abs=1e-9)


def test_min_direction():
    caps = {(0, 1): 0.5, (1, 2): 0.25, (2, 0): 0.6}
    alloc = solve_rate_allocation(_instance(caps, gateway=2), direction="min")
    # zero circulation is feasible, so the minimax outgoing flow is 0
    assert alloc.q == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        solve_rate_allocation(_instance(caps), direction="bogus")


def test_no_outgoing_links():
    caps = {(1, 0): 0.5}
    alloc = solve_rate_allocation(_instance(caps))
    assert alloc.q == 0.0 and alloc.binding_link is None


def test_objective_G():
    # [TRIVIAL] (r^nu/E + d^nu) * Q = (4/2 + 9) * 0.5
    assert objective_G(0.5, 2.0, 2.0, 3.0, 2.0) == pytest.approx(5.5)
    with pytest.raises(DepletedEnergyError):
        objective_G(0.5, 2.0, 0.0, 3.0, 2.0)


def test_error_proxy_properties():
    # 1 above capacity, strictly decreasing with SNR below it
    assert error_probability_proxy(0.0, 1.0) == 1.0
    assert error_probability_proxy(1.0, 1.0) == pytest.approx(1.0)  # at capacity
    lo = error_probability_proxy(3.0, 1.0)
    hi = error_probability_proxy(10.0, 1.0)
    assert 0 < hi < lo < 1
    # [DERIVED] snr=3 -> capacity 2, rate 1, phi = exp(-1)
    assert error_probability_proxy(3.0, 1.0) == pytest.approx(np.exp(-1.0))
    with pytest.raises(ValueError):
        error_probability_proxy(-1.0, 1.0)


def test_check_flow_rejects_violations():
    caps = {(0, 9): 0.4}
    inst = _instance(caps)
    assert not check_flow(inst, {(0, 9): 0.5})       # over capacity
    inst2 = _instance({(0, 1): 0.4, (1, 9): 0.4})
    assert not check_flow(inst2, {(0, 1): 0.3, (1, 9): 0.1})  # conservation
