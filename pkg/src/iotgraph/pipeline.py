"""End-to-end experiment pipeline and sweep harness.

One ``run_pipeline`` call covers: network synthesis, noisy measurements,
patch decomposition, local embedding, global synchronization, anchored
registration + SDP feasibility + anchored refinement, quality metrics,
and (optionally) topology extraction with the LMST baseline.  All
artifacts are written as deterministic CSVs (floats at 17 significant
digits, rows in sorted order) so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .model import NetworkSpec, generate_network, perturb_distances, _fmt
from .patches import extract_patches, patch_alignment_graph
from .localize import localize_patch, full_distance_matrix, refine_with_anchors, \
    PatchDistanceMatrix, IncompletableError
from .sync import synchronize
from .metrics import CoordSet, localization_error
from .anchored import build_chi_problem, solve_sdp_feasibility, register_to_anchors, \
    build_stitch_problem, stitch_global, SingularStitchError, UnanchorableError, \
    well_localized_subset
from .power import PowerConfig
from .topology import extract_topology, lmst_topology, save_topology_csv, save_trace_csv


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one pipeline run depends on (hashable, replace-friendly)."""

    num_end_nodes: int = 20
    num_gateways: int = 3
    width: float = 4000.0
    height: float = 4000.0
    comm_range: float | None = None      # None: bisect to the degree band
    degree_lo: float = 14.0
    degree_hi: float = 20.0
    eta: float = 0.0
    seed: int = 0
    k_overlap: int = 2
    reflection_method: str = "alignment"
    pearson_threshold: float = -0.5
    rho: float = 1e-5
    sdp_tol: float = 1e-7
    sdp_max_sweeps: int = 2000
    refine_iters: int = 2000
    stitch_mu: float = 1.0
    run_topology: bool = False
    varsigma: float = 0.5
    topo_eps: float = 1e-3
    reextract: bool = False
    power: PowerConfig = field(default_factory=PowerConfig)


@dataclass
class PipelineResult:
    config: ExperimentConfig
    network: object
    measurements: object
    comm_range: float
    mean_degree: float
    sync: object
    sdp: object
    coords_est: np.ndarray          # (l, 2) final end-node estimate
    frob_error: float               # centered Frobenius error ratio
    abs_rms: float                  # RMS in the absolute anchored frame (m)
    well_localized: list
    stitch_scores: np.ndarray | None
    topology: object = None
    topo_trace: object = None
    lmst: object = None
    flags: list = field(default_factory=list)
    runtime_s: float = 0.0


def _set_range(network, comm_range, gateway_range):
    """Rebuild the edge set for a new connection range."""
    coords = network.all_coords
    l = network.num_end_nodes
    network.edges.clear()
    network.true_distances.clear()
    for a in range(l):
        for b in range(a + 1, network.num_nodes):
            r = comm_range if b < l else gateway_range
            d = float(np.linalg.norm(coords[a] - coords[b]))
            if 0 < d <= r:
                network.edges.add((a, b))
                network.true_distances[(a, b)] = d


def _network_distance_matrix(network, measurements) -> PatchDistanceMatrix:
    """Measured-pair matrix over all nodes (for the anchored refinement)."""
    n = network.num_nodes
    dist = np.zeros((n, n))
    measured = np.zeros((n, n), dtype=bool)
    for (a, b) in network.edges:
        if measurements.has(a, b):
            d = measurements.get(a, b)
            dist[a, b] = dist[b, a] = d
            measured[a, b] = measured[b, a] = True
    np.fill_diagonal(measured, True)
    return PatchDistanceMatrix(tuple(range(n)), dist, measured)


def run_pipeline(config: ExperimentConfig) -> PipelineResult:
    t0 = time.perf_counter()
    flags = []
    spec = NetworkSpec(num_end_nodes=config.num_end_nodes,
                       num_gateways=config.num_gateways,
                       width=config.width, height=config.height,
                       comm_range=config.comm_range or 1000.0,
                       seed=config.seed)
    network = generate_network(spec)
    if config.comm_range is None:
        coords = network.all_coords
        try:
            r = model.comm_range_for_degree(coords, lo=config.degree_lo,
                                            hi=config.degree_hi)
        except model.InvalidParameterError:
            # too few nodes for the band: fall back to the complete graph
            diff = coords[:, None, :] - coords[None, :, :]
            r = float(np.sqrt((diff ** 2).sum(-1)).max()) + 1.0
            flags.append(("degree-band-unreachable", r))
        _set_range(network, r, r)
        comm_range = r
    else:
        comm_range = config.comm_range
    degree = model.mean_degree(network.num_nodes, network.edges)
    measurements = perturb_distances(network, config.eta, seed=config.seed + 1)

    # patch decomposition and local embedding
    l = network.num_end_nodes
    patchset = extract_patches(l, network.edges)
    patch_graph = patch_alignment_graph(patchset, k=config.k_overlap)
    embeddings = []
    for patch in patchset:
        try:
            _, emb = localize_patch(patch, measurements)
        except IncompletableError:
            flags.append(("incompletable-patch", patch.anchor))
            from .localize import LocalEmbedding
            emb = LocalEmbedding(coords=np.zeros((len(patch.members), 2)),
                                 eigvals=np.zeros(2), stress=0.0, degenerate=True)
        embeddings.append(emb)

    sync = synchronize(patchset, patch_graph, embeddings, measurements,
                       num_nodes=l, edges=network.end_node_edges(),
                       reflection_method=config.reflection_method,
                       pearson_threshold=config.pearson_threshold)
    flags.extend(sync.flags)

    # registration to the absolute gateway frame, then SDP + refinement
    registered = register_to_anchors(sync.coords, measurements, network)
    if registered is None:
        flags.append(("registration-failed",))
    sdp = None
    init = registered if registered is not None else sync.coords
    try:
        problem = build_chi_problem(network, measurements, rho=config.rho)
        # interval mode (eta > 0) only reaches coarse residuals; cap its
        # sweep budget since the anchored refinement does the polishing
        sweeps = (config.sdp_max_sweeps if config.eta == 0
                  else min(config.sdp_max_sweeps, 300))
        sdp = solve_sdp_feasibility(problem, tol=config.sdp_tol,
                                    max_sweeps=sweeps,
                                    init_coords=init, raise_on_fail=False)
        if not sdp.converged:
            flags.append(("sdp-not-converged", sdp.residuals[-1]))
        coords_est = sdp.coords
        well = well_localized_subset(sdp.omega, config.rho)
    except UnanchorableError:
        flags.append(("unanchorable",))
        coords_est = init
        well = []

    full = _network_distance_matrix(network, measurements)
    fixed = np.zeros(network.num_nodes, dtype=bool)
    fixed[l:] = True
    # refine from whichever frame estimate fits the measured graph better
    from .localize import stress as _stress
    candidates = [coords_est]
    if registered is not None and coords_est is not registered:
        candidates.append(registered)
    coords_est = min(candidates, key=lambda c: _stress(
        np.vstack([c, network.gateway_coords]), full))
    all_init = np.vstack([coords_est, network.gateway_coords])
    refined, _ = refine_with_anchors(all_init, fixed, full,
                                     max_iters=config.refine_iters)
    coords_est = refined[:l]

    # stitch diagnostics (closed-form regularized fusion scores)
    try:
        stitch = stitch_global(build_stitch_problem(network, measurements,
                                                    mu=config.stitch_mu))
    except (SingularStitchError, ValueError):
        stitch = None
        flags.append(("stitch-singular",))

    truth = CoordSet(np.asarray(network.end_node_coords, dtype=float).T.copy())
    frob = localization_error(truth, CoordSet(coords_est.T.copy()))
    abs_rms = float(np.sqrt(np.mean(np.sum(
        (coords_est - network.end_node_coords) ** 2, axis=1))))

    topo = trace = lmst = None
    if config.run_topology:
        topo, trace = extract_topology(coords_est, network.gateway_coords,
                                       config.power, varsigma=config.varsigma,
                                       eps=config.topo_eps,
                                       reextract=config.reextract)
        lmst = lmst_topology(np.vstack([coords_est, network.gateway_coords]),
                             config.power.r_max_m, config.power)
        flags.extend(topo.flags)

    return PipelineResult(config=config, network=network, measurements=measurements,
                          comm_range=comm_range, mean_degree=degree, sync=sync,
                          sdp=sdp, coords_est=coords_est, frob_error=frob,
                          abs_rms=abs_rms, well_localized=well,
                          stitch_scores=stitch, topology=topo, topo_trace=trace,
                          lmst=lmst, flags=flags,
                          runtime_s=time.perf_counter() - t0)


def save_estimate_csv(result: PipelineResult, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "x_est_m", "y_est_m"])
        for i, p in enumerate(result.coords_est):
            w.writerow([i, _fmt(p[0]), _fmt(p[1])])


def save_metrics_csv(result: PipelineResult, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["n", "gateways", "eta", "seed", "comm_range_m",
                    "mean_degree", "frob_error", "abs_rms_m"])
        c = result.config
        w.writerow([c.num_end_nodes, c.num_gateways, _fmt(c.eta), c.seed,
                    _fmt(result.comm_range), _fmt(result.mean_degree),
                    _fmt(result.frob_error), _fmt(result.abs_rms)])


def export_run(result: PipelineResult, out_dir):
    """Write the full artifact set for one run into ``out_dir``."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    model.save_network_csv(result.network, result.measurements,
                           os.path.join(out_dir, "nodes.csv"),
                           os.path.join(out_dir, "edges.csv"))
    save_estimate_csv(result, os.path.join(out_dir, "estimate.csv"))
    save_metrics_csv(result, os.path.join(out_dir, "metrics.csv"))
    if result.topology is not None:
        save_topology_csv(result.topology, os.path.join(out_dir, "topology.csv"))
        save_trace_csv(result.topo_trace, os.path.join(out_dir, "trace.csv"))
        save_topology_csv(result.lmst, os.path.join(out_dir, "lmst.csv"))


def sweep(base: ExperimentConfig, nodes, etas, seeds):
    """Grid of pipeline runs; yields (n, eta, seed, result) deterministically."""
    for n in nodes:
        for eta in etas:
            for seed in seeds:
                cfg = replace(base, num_end_nodes=n, eta=eta, seed=seed)
                yield n, eta, seed, run_pipeline(cfg)


def sweep_and_summarize(base: ExperimentConfig, nodes, etas, seeds, out_dir=None):
    """Run the noise-sweep grid; returns (rows, summary).

    ``rows`` holds one dict per run; ``summary`` aggregates the mean
    centered Frobenius error per (n, eta) cell — the shape of the usual
    noise-robustness figure.  With ``out_dir`` both tables land on disk.
    """
    rows = []
    for n, eta, seed, res in sweep(base, nodes, etas, seeds):
        rows.append({"n": n, "eta": eta, "seed": seed,
                     "comm_range_m": res.comm_range,
                     "mean_degree": res.mean_degree,
                     "frob_error": res.frob_error,
                     "abs_rms_m": res.abs_rms,
                     "runtime_s": res.runtime_s})
    summary = []
    for n in nodes:
        for eta in etas:
            errs = [r["frob_error"] for r in rows
                    if r["n"] == n and r["eta"] == eta]
            summary.append({"n": n, "eta": eta,
                            "mean_frob_error": float(np.mean(errs)),
                            "runs": len(errs)})
    if out_dir is not None:
        import os
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["n", "eta", "seed", "comm_range_m", "mean_degree",
                        "frob_error", "abs_rms_m"])
            for r in rows:
                w.writerow([r["n"], _fmt(r["eta"]), r["seed"],
                            _fmt(r["comm_range_m"]), _fmt(r["mean_degree"]),
                            _fmt(r["frob_error"]), _fmt(r["abs_rms_m"])])
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["n", "eta", "mean_frob_error", "runs"])
            for r in summary:
                w.writerow([r["n"], _fmt(r["eta"]),
                            _fmt(r["mean_frob_error"]), r["runs"]])
    return rows, summary
