"""Code-rate / flow allocation on a node-gateway link and the error proxy.

The allocation problem puts box-bounded virtual flows h on directed links
under per-node flow conservation, with the link transfer value Q taken as
the maximum outgoing flow of the source node.  The stationarity analysis
of the underlying KKT system pushes the binding flow to its capacity, so
the default direction maximizes Q (an LP per candidate binding link); the
minimizing reading is available behind ``direction="min"``.

The coding abstraction has no computable channel, so the error
probability is a monotone capacity-gap proxy in the link SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .power import DepletedEnergyError


class InfeasibleFlowError(ValueError):
    """No flow satisfies conservation within the capacity boxes."""


@dataclass
class RateInstance:
    """A flow/rate instance around one node-gateway link.

    ``capacities`` maps directed links (u, v) to max achievable code rate;
    ``supplies`` gives the per-node flow balance psi.  The objective is
    evaluated for ``source`` talking to ``gateway`` at distance ``d``.
    """

    nodes: tuple
    capacities: dict
    supplies: dict                 # interior-node balances (usually all zero)
    source: int
    gateway: int
    range_m: float
    energy: float
    d: float
    nu: float = 2.0

    def __post_init__(self):
        # source and gateway are boundary nodes: flow enters/leaves there
        for v in (self.source, self.gateway):
            if abs(self.supplies.get(v, 0.0)) > 0:
                raise InfeasibleFlowError(
                    f"boundary node {v} cannot carry a fixed supply")

    @property
    def interior(self):
        return tuple(v for v in self.nodes
                     if v not in (self.source, self.gateway))


@dataclass
class RateAllocation:
    q: float
    flows: dict
    objective: float
    binding_link: tuple | None


def objective_G(q, range_m, energy, d, nu):
    """[r^nu / E + d^nu] * Q."""
    if energy <= 0:
        raise DepletedEnergyError(f"remaining energy {energy} <= 0")
    return (range_m ** nu / energy + d ** nu) * q


def error_probability_proxy(snr, rate, c=1.0):
    """Capacity-gap error probability in [0, 1].

    1 above capacity, exp(-c * (capacity - rate)) below, with capacity
    log2(1 + snr); strictly decreasing in snr below capacity.
    """
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0) or rate < 0:
        raise ValueError("snr and rate must be nonnegative")
    cap = np.log2(1.0 + snr)
    phi = np.where(rate > cap, 1.0, np.exp(-c * (cap - rate)))
    return float(phi) if phi.ndim == 0 else phi


def _lp_base(instance: RateInstance):
    links = sorted(instance.capacities)
    index = {e: k for k, e in enumerate(links)}
    node_list = list(instance.interior)       # boundary nodes unconstrained
    A_eq = np.zeros((len(node_list), len(links)))
    b_eq = np.array([instance.supplies.get(v, 0.0) for v in node_list])
    for (u, v), k in index.items():
        if u in node_list:
            A_eq[node_list.index(u), k] += 1.0
        if v in node_list:
            A_eq[node_list.index(v), k] -= 1.0
    bounds = [(0.0, instance.capacities[e]) for e in links]
    return links, index, A_eq, b_eq, bounds


def solve_rate_allocation(instance: RateInstance, direction="max") -> RateAllocation:
    """Optimal Q and a conserving flow assignment.

    direction="max" (default): push the binding outgoing flow of the
    source to the largest feasible value, one LP per candidate link.
    direction="min": minimax LP on the source's outgoing flows.
    """
    links, index, A_eq, b_eq, bounds = _lp_base(instance)
    out_links = [e for e in links if e[0] == instance.source]
    if not out_links:
        flows = _feasible_flow(instance, links, A_eq, b_eq, bounds)
        return RateAllocation(q=0.0, flows=flows, objective=0.0, binding_link=None)

    if direction == "max":
        best = None
        for e in out_links:
            c = np.zeros(len(links))
            c[index[e]] = -1.0
            res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
            if not res.success:
                continue
            q = float(res.x[index[e]])
            if best is None or q > best[0] + 1e-12:
                best = (q, dict(zip(links, res.x)), e)
        if best is None:
            raise InfeasibleFlowError("no feasible flow for the given supplies")
        q, flows, binding = best
    elif direction == "min":
        # variables: flows + t; minimize t with h_e <= t on source out-links
        n = len(links)
        c = np.zeros(n + 1)
        c[-1] = 1.0
        A_ub = np.zeros((len(out_links), n + 1))
        for r, e in enumerate(out_links):
            A_ub[r, index[e]] = 1.0
            A_ub[r, -1] = -1.0
        A_eq2 = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(out_links)),
                      A_eq=A_eq2, b_eq=b_eq,
                      bounds=bounds + [(0.0, None)], method="highs")
        if not res.success:
            raise InfeasibleFlowError("no feasible flow for the given supplies")
        flows = dict(zip(links, res.x[:-1]))
        q = max(flows[e] for e in out_links)
        binding = max(out_links, key=lambda e: flows[e])
    else:
        raise ValueError(f"unknown direction {direction!r}")

    obj = objective_G(q, instance.range_m, instance.energy, instance.d, instance.nu)
    return RateAllocation(q=q, flows=flows, objective=obj, binding_link=binding)


def _feasible_flow(instance, links, A_eq, b_eq, bounds):
    res = linprog(np.zeros(len(links)), A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs")
    if not res.success:
        raise InfeasibleFlowError("no feasible flow for the given supplies")
    return dict(zip(links, res.x))


def check_flow(instance: RateInstance, flows, tol=1e-9):
    """Box and interior-conservation check for a returned assignment."""
    for e, h in flows.items():
        if h < -tol or h > instance.capacities[e] + tol:
            return False
    for v in instance.interior:
        bal = (sum(h for (u, w), h in flows.items() if u == v)
               - sum(h for (u, w), h in flows.items() if w == v))
        if abs(bal - instance.supplies.get(v, 0.0)) > tol:
            return False
    return True
