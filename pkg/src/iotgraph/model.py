"""Synthetic IoT network generation, range-based edges and measurement noise.

Node ids are global: end-nodes get ids ``0 .. l-1`` and gateways
``l .. l+s-1``.  Edges are unordered id pairs stored as ``(min, max)``
tuples.  All randomness flows through seeded ``numpy`` generators, so a
fixed (spec, seed) pair reproduces networks and measurements exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class InvalidSpecError(ValueError):
    """Raised when a NetworkSpec fails validation."""


class InvalidParameterError(ValueError):
    """Raised for out-of-range operation parameters (e.g. noise factor)."""


def _fmt(x):
    return format(float(x), ".17g")


def edge_key(a, b):
    """Canonical unordered pair."""
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class NetworkSpec:
    """Parameters of a synthetic deployment.

    ``annulus_inner``/``annulus_outer`` switch end-node placement from
    uniform-over-rectangle to uniform-in-area over an annulus centered in
    the region (the first gateway is then placed at the center).
    """

    num_end_nodes: int
    num_gateways: int = 0
    width: float = 4000.0
    height: float = 4000.0
    comm_range: float = 1000.0
    gateway_range: float | None = None
    seed: int = 0
    annulus_inner: float | None = None
    annulus_outer: float | None = None

    def __post_init__(self):
        if self.num_end_nodes < 1:
            raise InvalidSpecError("need at least one end-node")
        if self.num_gateways < 0:
            raise InvalidSpecError("gateway count must be >= 0")
        if self.comm_range <= 0:
            raise InvalidSpecError("comm_range must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidSpecError("zero-area region")
        if (self.annulus_inner is None) != (self.annulus_outer is None):
            raise InvalidSpecError("annulus mode needs both radii")
        if self.annulus_outer is not None:
            if not 0 <= self.annulus_inner < self.annulus_outer:
                raise InvalidSpecError("annulus radii must satisfy 0 <= inner < outer")

    @property
    def effective_gateway_range(self):
        return self.comm_range if self.gateway_range is None else self.gateway_range


@dataclass
class Network:
    """Ground-truth deployment: coordinates, edge set and true distances."""

    end_node_coords: np.ndarray    # (l, 2) meters
    gateway_coords: np.ndarray     # (s, 2) meters
    edges: set                     # unordered id pairs
    true_distances: dict           # edge -> meters

    @property
    def num_end_nodes(self):
        return len(self.end_node_coords)

    @property
    def num_gateways(self):
        return len(self.gateway_coords)

    @property
    def num_nodes(self):
        return self.num_end_nodes + self.num_gateways

    @property
    def all_coords(self):
        if self.num_gateways == 0:
            return np.asarray(self.end_node_coords, dtype=float)
        return np.vstack([self.end_node_coords, self.gateway_coords])

    def is_gateway(self, i):
        return i >= self.num_end_nodes

    def end_node_edges(self):
        """Edges with both endpoints in the end-node set."""
        l = self.num_end_nodes
        return {e for e in self.edges if e[0] < l and e[1] < l}

    def gateway_edges(self):
        """End-node to gateway edges."""
        l = self.num_end_nodes
        return {e for e in self.edges if e[0] < l <= e[1]}

    def check_invariants(self):
        coords = self.all_coords
        for (a, b), d in self.true_distances.items():
            assert d > 0
            assert 0 <= a < b < self.num_nodes
            assert math.isclose(d, float(np.linalg.norm(coords[a] - coords[b])),
                                rel_tol=0, abs_tol=1e-9)


@dataclass
class DistanceMeasurements:
    """Noisy symmetric distance map ``d = delta + eps`` with uniform eps."""

    values: dict                   # edge -> meters
    noise_factor: float

    def get(self, a, b):
        if a == b:
            return 0.0
        return self.values[edge_key(a, b)]

    def has(self, a, b):
        return a == b or edge_key(a, b) in self.values


def build_edges(coords, max_range):
    """All unordered pairs within ``max_range`` (inclusive), no self-loops."""
    if max_range <= 0:
        raise InvalidParameterError("range must be positive")
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    edges = set()
    if n < 2:
        return edges
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    ii, jj = np.nonzero(dist <= max_range)
    for a, b in zip(ii.tolist(), jj.tolist()):
        if a < b:
            edges.add((a, b))
    return edges


def generate_network(spec: NetworkSpec) -> Network:
    """Place nodes, build the range graph and record true distances.

    End-node pairs are linked when within ``comm_range``; end-node/gateway
    pairs when within ``gateway_range``.  Gateway-gateway links are not
    modelled (gateway positions are known a priori).
    """
    rng = np.random.default_rng(spec.seed)
    l, s = spec.num_end_nodes, spec.num_gateways
    cx, cy = spec.width / 2.0, spec.height / 2.0

    if spec.annulus_outer is not None:
        r = np.sqrt(rng.uniform(spec.annulus_inner ** 2, spec.annulus_outer ** 2, l))
        phi = rng.uniform(0.0, 2 * np.pi, l)
        end = np.column_stack([cx + r * np.cos(phi), cy + r * np.sin(phi)])
        gws = []
        if s > 0:
            gws.append([cx, cy])
            rg = np.sqrt(rng.uniform(spec.annulus_inner ** 2, spec.annulus_outer ** 2, s - 1))
            pg = rng.uniform(0.0, 2 * np.pi, s - 1)
            for rr, pp in zip(rg, pg):
                gws.append([cx + rr * np.cos(pp), cy + rr * np.sin(pp)])
        gw = np.asarray(gws, dtype=float).reshape(s, 2)
    else:
        end = np.column_stack([rng.uniform(0.0, spec.width, l),
                               rng.uniform(0.0, spec.height, l)])
        gw = np.column_stack([rng.uniform(0.0, spec.width, s),
                              rng.uniform(0.0, spec.height, s)])

    net = Network(end_node_coords=end, gateway_coords=gw,
                  edges=set(), true_distances={})
    coords = net.all_coords
    grange = spec.effective_gateway_range
    for a in range(l):
        for b in range(a + 1, l + s):
            rng_ab = spec.comm_range if b < l else grange
            d = float(np.linalg.norm(coords[a] - coords[b]))
            if 0 < d <= rng_ab:
                net.edges.add((a, b))
                net.true_distances[(a, b)] = d
    return net


def perturb_distances(network: Network, eta: float, seed: int = 0) -> DistanceMeasurements:
    """Noisy measurements: one uniform draw on [-eta*d, +eta*d] per edge."""
    if not 0.0 <= eta <= 1.0:
        raise InvalidParameterError(f"noise factor {eta} outside [0, 1]")
    rng = np.random.default_rng(seed)
    values = {}
    for e in sorted(network.edges):
        delta = network.true_distances[e]
        values[e] = delta + rng.uniform(-eta * delta, eta * delta)
    return DistanceMeasurements(values=values, noise_factor=eta)


def mean_degree(num_nodes, edges):
    if num_nodes == 0:
        return 0.0
    return 2.0 * len(edges) / num_nodes


def comm_range_for_degree(coords, lo=14.0, hi=20.0, max_iter=80):
    """Bisect the connection range until mean degree lands in [lo, hi].

    Raises if the point set cannot reach the band (too few nodes).
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n - 1 < lo:
        raise InvalidParameterError(f"{n} nodes cannot reach mean degree {lo}")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    target = 0.5 * (lo + hi)
    r_lo, r_hi = 1e-9, float(dist.max()) + 1.0
    for _ in range(max_iter):
        r = 0.5 * (r_lo + r_hi)
        deg = ((dist <= r).sum() - n) / n
        if lo <= deg <= hi:
            return r
        if deg < target:
            r_lo = r
        else:
            r_hi = r
    return 0.5 * (r_lo + r_hi)


def save_network_csv(network: Network, measurements, nodes_path, edges_path):
    """Write the documented nodes.csv / edges.csv pair."""
    l = network.num_end_nodes
    with open(nodes_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "kind", "x_m", "y_m"])
        for i, p in enumerate(network.all_coords):
            kind = "end" if i < l else "gateway"
            w.writerow([i, kind, _fmt(p[0]), _fmt(p[1])])
    with open(edges_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["a", "b", "true_dist_m", "meas_dist_m"])
        for a, b in sorted(network.edges):
            meas = "" if measurements is None else _fmt(measurements.get(a, b))
            w.writerow([a, b, _fmt(network.true_distances[(a, b)]), meas])


def load_network_csv(nodes_path, edges_path):
    """Inverse of :func:`save_network_csv`."""
    end, gws = [], []
    with open(nodes_path, newline="") as f:
        for row in csv.DictReader(f):
            p = [float(row["x_m"]), float(row["y_m"])]
            (end if row["kind"] == "end" else gws).append(p)
    net = Network(end_node_coords=np.asarray(end, dtype=float),
                  gateway_coords=np.asarray(gws, dtype=float).reshape(len(gws), 2),
                  edges=set(), true_distances={})
    meas_values = {}
    with open(edges_path, newline="") as f:
        for row in csv.DictReader(f):
            e = edge_key(int(row["a"]), int(row["b"]))
            net.edges.add(e)
            net.true_distances[e] = float(row["true_dist_m"])
            if row.get("meas_dist_m"):
                meas_values[e] = float(row["meas_dist_m"])
    meas = DistanceMeasurements(values=meas_values, noise_factor=float("nan")) if meas_values else None
    return net, meas
