"""Topology extraction: SNR-greedy sewing plus Lyapunov-guarded power refinement.

The extraction sorts candidate links by SNR, sews components together
through a union-find forest, then iteratively lowers per-node transmit
power in fixed dB steps while every kept link stays detectable and the
Lyapunov value V = Phi + beta * M(top) decreases.  Brute-force power
search and the local-MST construction serve as baselines.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .power import PowerConfig, dbm_to_mw, mw_to_dbm, link_snr, initial_power_assignment
from .rateopt import error_probability_proxy


class BudgetExceededError(RuntimeError):
    """Brute-force configuration count above the allowed budget."""

    def __init__(self, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(f"{required} configurations exceed budget {budget}")


class UnionFind:
    """Disjoint sets with path compression (no ranking; inputs are small)."""

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, k):
        root = k
        while root != self.parent[root]:
            root = self.parent[root]
        while k != root:
            self.parent[k], k = root, self.parent[k]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


@dataclass
class Topology:
    edges: list                   # sorted unordered id pairs
    powers_dbm: np.ndarray        # per-node transmit power
    edge_snr: dict                # edge -> linear SNR at assignment time
    connected: bool
    num_components: int
    flags: list = field(default_factory=list)


@dataclass
class ExtractionTrace:
    records: list = field(default_factory=list)   # accepted refinement steps
    sew_steps: int = 0
    iterations: int = 0
    terminal_delta: float = float("inf")
    delta_from_max: float = 0.0


def lyapunov_value(phi, m_top, beta):
    """V = Phi + beta * M(top)."""
    if not 0.0 <= phi <= 1.0 or m_top < 0 or beta < 0:
        raise ValueError("phi in [0,1], m_top >= 0, beta >= 0 required")
    return phi + beta * m_top


def topology_metric(q_values):
    """Mean link quality; empty topologies score 0 by convention."""
    q = np.asarray(list(q_values), dtype=float)
    return float(q.mean()) if q.size else 0.0


def candidate_links(coords, num_end, cfg: PowerConfig):
    """End-end and end-gateway pairs within r_max, with distances.

    Gateway-gateway links are not modelled.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    links = []
    for a in range(num_end):
        for b in range(a + 1, n):
            d = float(np.linalg.norm(coords[a] - coords[b]))
            if 0 < d <= cfg.r_max_m:
                links.append(((a, b), d))
    return links


def edge_quality(edge, d, powers_dbm, cfg):
    """Bidirectional link SNR: the weaker of the two transmit directions."""
    a, b = edge
    return min(float(link_snr(powers_dbm[a], d, cfg)),
               float(link_snr(powers_dbm[b], d, cfg)))


def network_phi(edge_snr, cfg):
    """Network error probability: worst link under the capacity-gap proxy."""
    if not edge_snr:
        return 0.0
    return float(max(error_probability_proxy(q, cfg.code_rate, cfg.proxy_c)
                     for q in edge_snr.values()))


def power_grid(cfg: PowerConfig, step_db):
    """Discrete power levels p_tmin + k*step, clipped at rho_tmax."""
    levels = []
    p = cfg.p_tmin_dbm
    while p < cfg.rho_tmax_dbm - 1e-9:
        levels.append(p)
        p += step_db
    levels.append(cfg.rho_tmax_dbm)
    return levels


def quantize_up(p_dbm, cfg: PowerConfig, step_db):
    """Smallest grid level >= p (capped at rho_tmax)."""
    if p_dbm >= cfg.rho_tmax_dbm:
        return cfg.rho_tmax_dbm
    k = math.ceil((p_dbm - cfg.p_tmin_dbm) / step_db - 1e-12)
    return min(cfg.p_tmin_dbm + max(k, 0) * step_db, cfg.rho_tmax_dbm)


def _min_power_for_edge(d, cfg):
    """Transmit power (dBm) putting the link at SNR zeta."""
    return float(mw_to_dbm(cfg.zeta * cfg.noise_mw * d ** cfg.nu / cfg.link_gain))


def _state(edges_d, powers, cfg):
    snr = {e: edge_quality(e, d, powers, cfg) for e, d in edges_d.items()}
    m = topology_metric(snr.values())
    phi = network_phi(snr, cfg)
    return snr, phi, m, lyapunov_value(phi, m, cfg.beta)


def extract_topology(end_coords, gateway_coords, cfg: PowerConfig,
                     varsigma=0.5, eps=1e-3, max_rounds=200,
                     powers_dbm=None, reextract=False):
    """Greedy SNR topology extraction with iterative power refinement.

    Step 1 assigns distance-based initial powers (quantized up to the
    varsigma grid; gateways stay at rho_tmax).  Step 2 processes candidate
    links in decreasing initial-power SNR (ties: shorter distance, lower
    id pair) and sews distinct components, raising endpoint powers to keep
    the new link detectable.  Step 3 lowers node powers by varsigma while
    all incident links stay at SNR >= zeta and the Lyapunov value
    decreases; it stops when the relative SNR-vector change falls to eps.
    """
    if varsigma <= 0 or eps <= 0:
        raise ValueError("varsigma and eps must be positive")
    end_coords = np.asarray(end_coords, dtype=float)
    gateway_coords = np.asarray(gateway_coords, dtype=float).reshape(-1, 2)
    l = len(end_coords)
    coords = np.vstack([end_coords, gateway_coords]) if len(gateway_coords) else end_coords
    n = len(coords)
    trace = ExtractionTrace()
    flags = []

    if powers_dbm is None:
        if len(gateway_coords):
            p_end, capped = initial_power_assignment(end_coords, gateway_coords, cfg)
            if capped.any():
                flags.append(("unreachable-at-init", np.nonzero(capped)[0].tolist()))
        else:
            p_end = np.full(l, cfg.rho_tmax_dbm)
        powers = np.array([quantize_up(p, cfg, varsigma) for p in p_end]
                          + [cfg.rho_tmax_dbm] * len(gateway_coords))
    else:
        powers = np.asarray(powers_dbm, dtype=float).copy()

    links = candidate_links(coords, l, cfg)

    def sew(powers):
        order = sorted(links, key=lambda ed: (-edge_quality(ed[0], ed[1], powers, cfg),
                                              ed[1], ed[0]))
        uf = UnionFind(n)
        tree = {}
        for (e, d) in order:
            trace.iterations += 1
            if uf.find(e[0]) != uf.find(e[1]):
                need = _min_power_for_edge(d, cfg)
                if need > cfg.rho_tmax_dbm + 1e-9:
                    continue            # undetectable even at max power
                uf.union(e[0], e[1])
                tree[e] = d
                trace.sew_steps += 1
                for v in e:
                    if powers[v] < need:
                        powers[v] = quantize_up(need, cfg, varsigma)
        roots = {uf.find(i) for i in range(n)}
        return tree, len(roots)

    tree, ncomp = sew(powers)
    if ncomp > 1:
        flags.append(("disconnected", ncomp))

    # Step 3: power refinement
    snr_max_vec = np.array([edge_quality(e, d, np.full(n, cfg.rho_tmax_dbm), cfg)
                            for e, d in sorted(tree.items())])
    snr, phi, m, V = _state(tree, powers, cfg)
    k = 0
    for _ in range(max_rounds):
        prev_vec = np.array([snr[e] for e in sorted(tree)])
        changed = False
        for node in range(l):                 # gateways stay at rho_tmax
            trace.iterations += 1
            p_new = powers[node] - varsigma
            if p_new < cfg.p_tmin_dbm - 1e-9:
                continue
            trial = powers.copy()
            trial[node] = p_new
            incident = {e: d for e, d in tree.items() if node in e}
            if any(edge_quality(e, d, trial, cfg) < cfg.zeta - 1e-12
                   for e, d in incident.items()):
                continue
            snr_t, phi_t, m_t, V_t = _state(tree, trial, cfg)
            if V_t < V:
                powers, snr, phi, m, V = trial, snr_t, phi_t, m_t, V_t
                changed = True
                k += 1
                trace.records.append({
                    "k": k, "V": V, "phi": phi, "m_top": m,
                    "delta": float("nan"),
                    "total_power_dbm": float(mw_to_dbm(dbm_to_mw(powers).sum())),
                })
        cur_vec = np.array([snr[e] for e in sorted(tree)])
        norm_max = float(np.linalg.norm(snr_max_vec)) or 1.0
        delta = float(np.linalg.norm(cur_vec - prev_vec)) / norm_max
        trace.delta_from_max = float(np.linalg.norm(snr_max_vec - cur_vec)) / norm_max
        if trace.records:
            trace.records[-1]["delta"] = delta
        trace.terminal_delta = delta
        if not changed or delta <= eps:
            break

    if reextract:
        tree, ncomp = sew(powers)
        snr, phi, m, V = _state(tree, powers, cfg)

    topo = Topology(edges=sorted(tree), powers_dbm=powers, edge_snr=snr,
                    connected=(ncomp == 1), num_components=ncomp, flags=flags)
    return topo, trace


def evaluate_powers(coords, num_end, powers_dbm, cfg):
    """Active-edge set, connectivity and Lyapunov value for a power vector."""
    links = candidate_links(coords, num_end, cfg)
    active = {}
    for e, d in links:
        q = edge_quality(e, d, powers_dbm, cfg)
        if q >= cfg.zeta:
            active[e] = q
    uf = UnionFind(len(coords))
    for (a, b) in active:
        uf.union(a, b)
    ncomp = len({uf.find(i) for i in range(len(coords))})
    phi = network_phi(active, cfg)
    V = lyapunov_value(phi, topology_metric(active.values()), cfg.beta)
    total_mw = float(dbm_to_mw(powers_dbm[:num_end]).sum())
    return active, ncomp, V, total_mw


@dataclass
class BruteForceResult:
    powers_dbm: np.ndarray
    connected: bool
    total_mw: float
    lyapunov: float
    evaluated: int


def brute_force_power(end_coords, gateway_coords, levels_dbm, cfg,
                      budget=2_000_000) -> BruteForceResult:
    """Exhaustive end-node power search (gateways pinned at rho_tmax).

    Scores every configuration lexicographically: connectivity at
    SNR >= zeta first, then minimal total linear power, then minimal
    Lyapunov value.  Refuses when levels^nodes exceeds ``budget``.
    """
    end_coords = np.asarray(end_coords, dtype=float)
    gateway_coords = np.asarray(gateway_coords, dtype=float).reshape(-1, 2)
    l = len(end_coords)
    required = len(levels_dbm) ** l
    if required > budget:
        raise BudgetExceededError(required, budget)
    coords = np.vstack([end_coords, gateway_coords]) if len(gateway_coords) else end_coords

    best = None
    evaluated = 0
    for combo in itertools.product(levels_dbm, repeat=l):
        evaluated += 1
        powers = np.array(list(combo) + [cfg.rho_tmax_dbm] * len(gateway_coords))
        _, ncomp, V, total = evaluate_powers(coords, l, powers, cfg)
        score = (ncomp != 1, total, V)
        if best is None or score < best[0]:
            best = (score, powers, ncomp, total, V)
    score, powers, ncomp, total, V = best
    return BruteForceResult(powers_dbm=powers, connected=(ncomp == 1),
                            total_mw=total, lyapunov=V, evaluated=evaluated)


def brute_force_required_count(num_end_nodes, num_levels):
    """Configuration count a full enumeration would need."""
    return num_levels ** num_end_nodes


def _kruskal(nodes, edges_d):
    index = {v: i for i, v in enumerate(nodes)}
    uf = UnionFind(len(nodes))
    mst = set()
    for e, d in sorted(edges_d.items(), key=lambda kv: (kv[1], kv[0])):
        if uf.union(index[e[0]], index[e[1]]):
            mst.add(e)
    return mst


def lmst_topology(coords, max_range, cfg: PowerConfig | None = None) -> Topology:
    """Local minimum spanning tree over the range graph.

    Each node builds the MST of its 1-hop neighborhood (distance weights,
    deterministic id tie-break) and keeps its incident MST edges; the
    final symmetric graph keeps edges chosen by both endpoints.  Node
    powers (when a config is given) reach the farthest kept neighbor at
    SNR zeta.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    dist = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    in_range = (dist <= max_range) & ~np.eye(n, dtype=bool)

    keep = [set() for _ in range(n)]
    for u in range(n):
        hood = [u] + np.nonzero(in_range[u])[0].tolist()
        edges_d = {}
        for i, a in enumerate(hood):
            for b in hood[i + 1:]:
                if in_range[a][b] if a != b else False:
                    e = (a, b) if a < b else (b, a)
                    edges_d[e] = float(dist[a, b])
        for e in _kruskal(hood, edges_d):
            if u in e:
                keep[u].add(e)
    edges = sorted({e for u in range(n) for e in keep[u]
                    if e in keep[e[0]] and e in keep[e[1]]})

    powers = np.zeros(n)
    snr = {}
    if cfg is not None:
        for v in range(n):
            inc = [dist[e[0], e[1]] for e in edges if v in e]
            powers[v] = (_min_power_for_edge(max(inc), cfg) if inc
                         else cfg.p_tmin_dbm)
        powers = np.clip(powers, cfg.p_tmin_dbm, cfg.rho_tmax_dbm)
        snr = {e: edge_quality(e, float(dist[e[0], e[1]]), powers, cfg)
               for e in edges}
    uf = UnionFind(n)
    for (a, b) in edges:
        uf.union(a, b)
    ncomp = len({uf.find(i) for i in range(n)})
    return Topology(edges=edges, powers_dbm=powers, edge_snr=snr,
                    connected=(ncomp == 1), num_components=ncomp)


def save_topology_csv(topology: Topology, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["a", "b", "snr_db", "power_a_dbm"])
        for (a, b) in topology.edges:
            q = topology.edge_snr.get((a, b), float("nan"))
            snr_db = 10.0 * math.log10(q) if q > 0 else float("-inf")
            w.writerow([a, b, format(snr_db, ".17g"),
                        format(float(topology.powers_dbm[a]), ".17g")])


def save_trace_csv(trace: ExtractionTrace, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "V", "phi", "m_top", "delta", "total_power_dbm"])
        for r in trace.records:
            w.writerow([r["k"]] + [format(float(r[k]), ".17g")
                                   for k in ("V", "phi", "m_top", "delta",
                                             "total_power_dbm")])
