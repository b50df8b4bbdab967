"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The noise-sweep grid (criterion 5) is computed once per session and shared
with the convergence (7) and determinism (10) checks.
"""

import cmath
import filecmp
import itertools
import math
import os
import time

import numpy as np
import pytest

from iotgraph.model import Network, DistanceMeasurements, NetworkSpec, \
    generate_network
from iotgraph.localize import classical_mds, refine_majorization, \
    full_distance_matrix
from iotgraph.sync import ReflectionSystem, RotationSystem, \
    solve_reflection_sync, solve_rotation_sync
from iotgraph.anchored import build_chi_problem, solve_sdp_feasibility, \
    multilaterate
from iotgraph.power import PowerConfig
from iotgraph.rateopt import RateInstance, solve_rate_allocation
from iotgraph.topology import (extract_topology, brute_force_power,
                               brute_force_required_count, power_grid,
                               lmst_topology, UnionFind)
from iotgraph.pipeline import ExperimentConfig, run_pipeline, export_run


GRID_NODES = [20, 50, 100]
GRID_ETAS = [0.0, 0.1, 0.3, 0.5, 0.7]
GRID_SEEDS = [0, 1]


def report(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nCRITERION {num}: {status} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def _run_grid(out_dir):
    results = {}
    for n in GRID_NODES:
        for eta in GRID_ETAS:
            for seed in GRID_SEEDS:
                cfg = ExperimentConfig(num_end_nodes=n, num_gateways=3,
                                       eta=eta, seed=seed, run_topology=True)
                res = run_pipeline(cfg)
                results[(n, eta, seed)] = res
                export_run(res, os.path.join(
                    out_dir, f"run_n{n}_eta{eta}_s{seed}"))
    return results


@pytest.fixture(scope="session")
def grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid_a")
    return _run_grid(str(out)), str(out)


def test_criterion_1_zero_noise_end_to_end():
    t0 = time.perf_counter()
    res = run_pipeline(ExperimentConfig(num_end_nodes=20, num_gateways=3,
                                        eta=0.0, seed=0))
    dt = time.perf_counter() - t0
    ok = res.abs_rms < 1e-6 and res.frob_error < 1e-6 and dt < 5.0
    report(1, ok, f"rms={res.abs_rms:.3e} m, A_e={res.frob_error:.3e}, "
                  f"runtime={dt:.2f} s")


def _planted_graph(rng, n, extra=0.12):
    adj = np.zeros((n, n), dtype=bool)
    order = rng.permutation(n)
    for a, b in zip(order, order[1:]):
        adj[a, b] = adj[b, a] = True
    mask = np.triu(rng.random((n, n)) < extra, 1)
    adj |= mask | mask.T
    return adj


def test_criterion_2_sync_plant_and_recover():
    n = 50
    sign_ok = phase_ok = 0
    worst_phase = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        adj = _planted_graph(rng, n)
        signs = rng.choice([-1.0, 1.0], n)
        Z = np.where(adj, np.outer(signs, signs), 0.0)
        rec = solve_reflection_sync(ReflectionSystem(Z=Z))
        if np.array_equal(rec, signs) or np.array_equal(rec, -signs):
            sign_ok += 1
        phases = rng.uniform(0, 2 * np.pi, n)
        R = np.zeros((n, n), dtype=complex)
        for a in range(n):
            for j in range(a + 1, n):
                if adj[a, j]:
                    R[a, j] = cmath.exp(1j * (phases[a] - phases[j]))
                    R[j, a] = np.conj(R[a, j])
        prec = solve_rotation_sync(RotationSystem(R=R))
        offset = np.exp(1j * (prec - phases))
        err = float(np.max(np.abs(np.angle(offset * np.conj(offset[0])))))
        worst_phase = max(worst_phase, err)
        if err < 1e-6:
            phase_ok += 1
    ok = sign_ok == 100 and phase_ok == 100
    report(2, ok, f"signs {sign_ok}/100 exact, phases {phase_ok}/100 "
                  f"below 1e-6 rad (worst {worst_phase:.2e})")


def test_criterion_3_mds_and_majorization():
    rng = np.random.default_rng(0)
    mds_ok = 0
    for _ in range(100):
        coords = rng.uniform(0, 1, (8, 2))
        diff = coords[:, None, :] - coords[None, :, :]
        D = np.sqrt((diff ** 2).sum(-1))
        emb = classical_mds(full_distance_matrix(range(8), D))
        d2 = emb.coords[:, None, :] - emb.coords[None, :, :]
        if np.max(np.abs(np.sqrt((d2 ** 2).sum(-1)) - D)) < 1e-9:
            mds_ok += 1
    violations = 0
    for _ in range(100):
        coords = rng.uniform(0, 1, (9, 2))
        diff = coords[:, None, :] - coords[None, :, :]
        D = np.sqrt((diff ** 2).sum(-1)) * rng.uniform(0.7, 1.3, (9, 9))
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
        mat = full_distance_matrix(range(9), D)
        emb = refine_majorization(classical_mds(mat), mat)
        tr = emb.stress_trace
        violations += sum(b > a + 1e-12 for a, b in zip(tr, tr[1:]))
    ok = mds_ok == 100 and violations == 0
    report(3, ok, f"MDS exact {mds_ok}/100 at 1e-9; "
                  f"majorization violations {violations}/100 instances")


def test_criterion_4_sdp_vs_trilateration():
    gws = np.array([[0.0, 0], [4, 0], [0, 4]])
    p = np.array([1.0, 1.5])
    d = np.linalg.norm(gws - p, axis=1)
    oracle = multilaterate(gws, d)
    edges = {(0, 1): d[0], (0, 2): d[1], (0, 3): d[2]}
    net = Network(end_node_coords=p[None, :], gateway_coords=gws,
                  edges=set(edges), true_distances=edges)
    meas = DistanceMeasurements(values=edges, noise_factor=0.0)
    res = solve_sdp_feasibility(build_chi_problem(net, meas), tol=1e-9)
    err = float(np.max(np.abs(res.coords[0] - oracle)))
    ok = err < 1e-4 and res.omega[0] < 1e-5
    report(4, ok, f"coordinate gap {err:.2e} m vs oracle, "
                  f"omega={res.omega[0]:.2e}")


def test_criterion_5_noise_sweep(grid):
    results, _ = grid
    finite = all(np.isfinite(r.frob_error) for r in results.values())
    minimal = True
    for n in GRID_NODES:
        means = {eta: np.mean([results[(n, eta, s)].frob_error
                               for s in GRID_SEEDS]) for eta in GRID_ETAS}
        if min(means, key=means.get) != 0.0:
            minimal = False
    slow = [r.runtime_s for (n, _, _), r in results.items() if n == 100]
    ok = finite and minimal and max(slow) < 60.0
    report(5, ok, f"all {len(results)} runs finite={finite}, eta=0 minimal "
                  f"per n={minimal}, max n=100 runtime {max(slow):.1f} s")


def _random_flow_instance(rng):
    m = int(rng.integers(2, 5))          # end nodes, ids 0..m-1; gateway id m
    nodes = tuple(range(m + 1))
    pairs = [(u, v) for u in range(m + 1) for v in range(m + 1) if u != v]
    rng.shuffle(pairs)
    links = pairs[:int(rng.integers(3, 7))]
    caps = {tuple(e): 0.05 * int(rng.integers(1, 6)) for e in links}
    return RateInstance(nodes=nodes, capacities=caps, supplies={},
                        source=0, gateway=m, range_m=1.0, energy=1.0, d=1.0)


def _brute_force_q(inst):
    links = sorted(inst.capacities)
    units = [int(round(inst.capacities[e] / 0.05)) for e in links]
    best = 0
    out_idx = [k for k, e in enumerate(links) if e[0] == inst.source]
    for combo in itertools.product(*(range(u + 1) for u in units)):
        ok = True
        for v in inst.interior:
            bal = sum(c for c, e in zip(combo, links) if e[0] == v) \
                - sum(c for c, e in zip(combo, links) if e[1] == v)
            if bal != 0:
                ok = False
                break
        if ok and out_idx:
            best = max(best, max(combo[k] for k in out_idx))
    return 0.05 * best


def test_criterion_6_kkt_vs_brute_force():
    rng = np.random.default_rng(7)
    beaten = 0
    for _ in range(50):
        inst = _random_flow_instance(rng)
        q_lp = solve_rate_allocation(inst).q
        q_bf = _brute_force_q(inst)
        if q_bf > q_lp + 1e-9:
            beaten += 1
    report(6, beaten == 0,
           f"LP allocation beaten on {beaten}/50 grid-search instances")


def test_criterion_7_lyapunov_convergence(grid):
    results, _ = grid
    bad = []
    for key, res in results.items():
        topo, trace, cfg = res.topology, res.topo_trace, res.config
        vs = [r["V"] for r in trace.records]
        if not all(b < a for a, b in zip(vs, vs[1:])):
            bad.append((key, "V not strictly decreasing"))
        if trace.terminal_delta > cfg.topo_eps:
            bad.append((key, f"terminal delta {trace.terminal_delta:.2e}"))
        if any(q < cfg.power.zeta - 1e-12 for q in topo.edge_snr.values()):
            bad.append((key, "link below zeta"))
        p = topo.powers_dbm
        if (np.any(p < cfg.power.p_tmin_dbm - 1e-9)
                or np.any(p > cfg.power.rho_tmax_dbm + 1e-9)):
            bad.append((key, "power out of range"))
    report(7, not bad, f"{len(results)} runs checked, violations: {bad[:3]}")


def test_criterion_8_iterations_vs_brute_force_count():
    cfg = PowerConfig()
    levels = len(power_grid(cfg, 0.5))
    ok = True
    detail = []
    for n in GRID_NODES:
        its = []
        for seed in range(10):
            net = generate_network(NetworkSpec(num_end_nodes=n, num_gateways=3,
                                               comm_range=1500.0, seed=seed))
            _, trace = extract_topology(net.end_node_coords,
                                        net.gateway_coords, cfg)
            its.append(trace.iterations)
        mean_its = float(np.mean(its))
        required = brute_force_required_count(n, levels)
        ok = ok and mean_its < required
        detail.append(f"n={n}: {mean_its:.0f} vs {levels}^{n}")
    report(8, ok, "; ".join(detail))


def test_criterion_9_baselines():
    rng = np.random.default_rng(3)
    lmst_bad = 0
    for _ in range(50):
        coords = rng.uniform(0, 1000, (12, 2))
        rmax = 550.0
        topo = lmst_topology(coords, rmax)
        dist = np.linalg.norm(coords[:, None] - coords[None, :], axis=2)
        if any(dist[a, b] > rmax for (a, b) in topo.edges):
            lmst_bad += 1
            continue
        uf = UnionFind(12)
        for i in range(12):
            for j in range(i + 1, 12):
                if dist[i, j] <= rmax:
                    uf.union(i, j)
        if topo.num_components != len({uf.find(i) for i in range(12)}):
            lmst_bad += 1

    cfg = PowerConfig()
    step = 9.0
    levels = power_grid(cfg, step)
    power_bad = 0
    for seed in range(10):
        g = np.random.default_rng(100 + seed)
        ends = g.uniform(0, 3000, (int(g.integers(3, 6)), 2))
        gws = np.array([[1500.0, 1500.0]])
        topo, _ = extract_topology(ends, gws, cfg, varsigma=step)
        bf = brute_force_power(ends, gws, levels, cfg)
        if not (topo.connected and bf.connected):
            continue
        total = float(np.sum(10.0 ** (topo.powers_dbm[:len(ends)] / 10.0)))
        if total < bf.total_mw - 1e-9:
            power_bad += 1
    ok = lmst_bad == 0 and power_bad == 0
    report(9, ok, f"LMST violations {lmst_bad}/50; greedy below brute-force "
                  f"minimum on {power_bad}/10 instances")


def test_criterion_10_determinism(grid, tmp_path_factory):
    _, dir_a = grid
    dir_b = str(tmp_path_factory.mktemp("grid_b"))
    _run_grid(dir_b)
    mismatches = []
    for run in sorted(os.listdir(dir_a)):
        for name in sorted(os.listdir(os.path.join(dir_a, run))):
            a = os.path.join(dir_a, run, name)
            b = os.path.join(dir_b, run, name)
            if not (os.path.exists(b) and filecmp.cmp(a, b, shallow=False)):
                mismatches.append(f"{run}/{name}")
    report(10, not mismatches,
           f"grid rerun byte-identical ({len(os.listdir(dir_a))} runs); "
           f"mismatches: {mismatches[:5]}")
