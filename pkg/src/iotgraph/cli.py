"""Command-line entry point: generate / localize / topology / sweep verbs.

Configuration is layered: built-in defaults, then an optional flat
``key=value`` config file (``--config``), then explicit flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .model import NetworkSpec, generate_network, perturb_distances, \
    save_network_csv, mean_degree
from .pipeline import ExperimentConfig, run_pipeline, export_run, sweep_and_summarize
from .power import PowerConfig


def load_config_file(path):
    """Flat key=value lines; '#' comments and blank lines ignored."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


def _coerce(value, target_type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    return target_type(value)


def build_experiment_config(file_values, args) -> ExperimentConfig:
    """Defaults <- config file <- command-line flags."""
    defaults = ExperimentConfig()
    field_names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    power_fields = {f.name: f for f in dataclasses.fields(PowerConfig)}
    kwargs, power_kwargs = {}, {}
    for k, v in file_values.items():
        if k in field_names and k != "power":
            default = getattr(defaults, k)
            if isinstance(default, bool):
                t = bool
            elif isinstance(default, int):
                t = int
            elif isinstance(default, str):
                t = str
            else:
                t = float          # floats and None-able ranges
            kwargs[k] = _coerce(v, t)
        elif k in power_fields:
            power_kwargs[k] = _coerce(v, float)
        else:
            raise ValueError(f"unknown config key {k!r}")
    if power_kwargs:
        kwargs["power"] = PowerConfig(**power_kwargs)

    overrides = {
        "num_end_nodes": args.nodes, "num_gateways": args.gateways,
        "eta": args.eta, "seed": args.seed,
        "width": args.area_m, "height": args.area_m,
        "comm_range": args.comm_range,
        "reflection_method": getattr(args, "frames", None),
    }
    for k, v in overrides.items():
        if v is not None:
            kwargs[k] = v
    if getattr(args, "reextract", False):
        kwargs["reextract"] = True
    return ExperimentConfig(**kwargs)


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--gateways", type=int, default=None)
    p.add_argument("--area-m", type=float, default=None,
                   help="square region side length in meters")
    p.add_argument("--comm-range", type=float, default=None,
                   help="fixed connection range (default: fit the degree band)")
    p.add_argument("--eta", type=float, default=None, help="noise factor in [0,1]")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out", help="output directory")


def main(argv=None):
    ap = argparse.ArgumentParser(prog="iotgraph",
                                 description="patch-based network localization "
                                             "and topology extraction")
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="synthesize a network and write CSVs")
    _add_common(g)

    loc = sub.add_parser("localize", help="run the localization pipeline")
    _add_common(loc)
    loc.add_argument("--frames", choices=["alignment", "pearson"], default=None,
                     help="pairwise reflection rule")

    topo = sub.add_parser("topology", help="localization + topology extraction")
    _add_common(topo)
    topo.add_argument("--frames", choices=["alignment", "pearson"], default=None)
    topo.add_argument("--algo", choices=["greedy", "lmst"], default="greedy")
    topo.add_argument("--reextract", action="store_true",
                      help="re-run the sewing step after power refinement")

    sw = sub.add_parser("sweep", help="noise/size sweep with summary tables")
    _add_common(sw)
    sw.add_argument("--frames", choices=["alignment", "pearson"], default=None)
    sw.add_argument("--node-counts", default="20,50,100")
    sw.add_argument("--etas", default="0,0.1,0.3,0.5,0.7")
    sw.add_argument("--seeds", default="0,1,2")

    args = ap.parse_args(argv)
    file_values = load_config_file(args.config) if args.config else {}
    cfg = build_experiment_config(file_values, args)

    if args.verb == "generate":
        import os
        spec = NetworkSpec(num_end_nodes=cfg.num_end_nodes,
                           num_gateways=cfg.num_gateways,
                           width=cfg.width, height=cfg.height,
                           comm_range=cfg.comm_range or 1000.0, seed=cfg.seed)
        net = generate_network(spec)
        meas = perturb_distances(net, cfg.eta, seed=cfg.seed + 1)
        os.makedirs(args.out, exist_ok=True)
        save_network_csv(net, meas, os.path.join(args.out, "nodes.csv"),
                         os.path.join(args.out, "edges.csv"))
        print(f"wrote {net.num_nodes} nodes, {len(net.edges)} edges "
              f"(mean degree {mean_degree(net.num_nodes, net.edges):.2f}) "
              f"to {args.out}/")
        return 0

    if args.verb in ("localize", "topology"):
        if args.verb == "topology":
            cfg = dataclasses.replace(cfg, run_topology=True)
        res = run_pipeline(cfg)
        export_run(res, args.out)
        print(f"frob_error={res.frob_error:.6g} abs_rms={res.abs_rms:.6g} m "
              f"mean_degree={res.mean_degree:.2f} runtime={res.runtime_s:.2f} s")
        if args.verb == "topology":
            topo = res.lmst if args.algo == "lmst" else res.topology
            print(f"{args.algo}: {len(topo.edges)} edges, "
                  f"connected={topo.connected}")
        for flag in res.flags:
            print(f"warning: {flag}", file=sys.stderr)
        return 0

    if args.verb == "sweep":
        nodes = [int(s) for s in args.node_counts.split(",") if s]
        etas = [float(s) for s in args.etas.split(",") if s]
        seeds = [int(s) for s in args.seeds.split(",") if s]
        _, summary = sweep_and_summarize(cfg, nodes, etas, seeds, out_dir=args.out)
        for row in summary:
            print(f"n={row['n']} eta={row['eta']} "
                  f"mean_frob_error={row['mean_frob_error']:.6g} "
                  f"({row['runs']} runs)")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
