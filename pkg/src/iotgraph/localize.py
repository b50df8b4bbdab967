"""Per-patch localization: distance completion, classical MDS, majorization.

The three stages are independent functions so each can be tested against
its own oracle.  Majorization is implemented as the exact Guttman
transform over the measured pairs (pseudo-inverse of the weight
Laplacian), which reduces to the degree-normalized neighbor average on a
complete measurement graph and guarantees a non-increasing stress
sequence in all cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path


class IncompletableError(ValueError):
    """Patch measurement graph is disconnected; carries the components."""

    def __init__(self, components):
        self.components = components
        super().__init__(f"measurement graph has {len(components)} components: {components}")


@dataclass
class PatchDistanceMatrix:
    """Symmetric distance matrix over patch members with a measured mask."""

    members: tuple
    dist: np.ndarray          # (n, n) meters, zero diagonal
    measured: np.ndarray      # (n, n) bool, True where the entry was measured

    @property
    def size(self):
        return len(self.members)

    def check_invariants(self):
        assert np.allclose(self.dist, self.dist.T)
        assert np.all(np.diag(self.dist) == 0)
        off = ~np.eye(self.size, dtype=bool)
        assert np.all(self.dist[off] > 0)


@dataclass
class LocalEmbedding:
    coords: np.ndarray        # (n, 2) meters
    eigvals: np.ndarray       # top-2 retained eigenvalues, descending
    stress: float             # sum of squared residuals over measured pairs (m^2)
    clamped_eigs: int = 0     # negative eigenvalues clamped to zero
    clamped_mass: float = 0.0
    degenerate: bool = False
    stress_trace: list = field(default_factory=list)


def _measured_graph(patch, measurements):
    n = len(patch.members)
    dist = np.zeros((n, n))
    measured = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = patch.members[i], patch.members[j]
            if measurements.has(a, b):
                d = measurements.get(a, b)
                dist[i, j] = dist[j, i] = d
                measured[i, j] = measured[j, i] = True
    return dist, measured


def complete_distances(patch, measurements) -> PatchDistanceMatrix:
    """Fill missing intra-patch pairs with the bound midpoint.

    For a missing pair (i, j), the upper bound is the tightest two-hop sum
    over common measured neighbors k, min_k (d_ik + d_kj); the lower bound
    is the anti-triangle max_k |d_ik - d_kj|.  The filled value is their
    midpoint.  Pairs with no common neighbor fall back to the
    shortest-path distance (upper) with lower bound 0.
    """
    dist, measured = _measured_graph(patch, measurements)
    n = len(patch.members)
    if n == 1:
        return PatchDistanceMatrix(patch.members, dist, np.ones((1, 1), dtype=bool))
    if not measured.any():
        raise IncompletableError([(m,) for m in patch.members])

    ncomp, labels = connected_components(measured, directed=False)
    if ncomp > 1:
        comps = [tuple(patch.members[i] for i in np.nonzero(labels == c)[0])
                 for c in range(ncomp)]
        raise IncompletableError(comps)

    sp = None
    out = dist.copy()
    for i in range(n):
        for j in range(i + 1, n):
            if measured[i, j]:
                continue
            common = np.nonzero(measured[i] & measured[j])[0]
            if len(common):
                upper = float(np.min(dist[i, common] + dist[common, j]))
                lower = float(np.max(np.abs(dist[i, common] - dist[common, j])))
            else:
                if sp is None:
                    w = np.where(measured, dist, 0.0)
                    sp = shortest_path(w, directed=False)
                upper = float(sp[i, j])
                lower = 0.0
            out[i, j] = out[j, i] = 0.5 * (lower + upper)
    measured_out = measured.copy()
    np.fill_diagonal(measured_out, True)
    return PatchDistanceMatrix(patch.members, out, measured_out)


def full_distance_matrix(members, dist):
    """Wrap an already-complete matrix (everything counts as measured)."""
    dist = np.asarray(dist, dtype=float)
    return PatchDistanceMatrix(tuple(members), dist,
                               np.ones(dist.shape, dtype=bool))


def classical_mds(matrix: PatchDistanceMatrix) -> LocalEmbedding:
    """Double-center squared distances and keep the top-2 eigenpairs.

    Negative eigenvalues (non-Euclidean inputs) are clamped to zero and
    counted.  The all-zero matrix yields every point at the origin with
    the degenerate flag set.
    """
    D = np.asarray(matrix.dist, dtype=float)
    n = len(D)
    J = np.eye(n) - np.ones((n, n)) / n
    B = -0.5 * J @ (D ** 2) @ J
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]

    top = evals[:2] if n >= 2 else np.array([evals[0], 0.0])
    clamped = int((top < 0).sum())
    clamped_mass = float(-top[top < 0].sum())
    lam = np.clip(top, 0.0, None)
    if n >= 2:
        coords = evecs[:, :2] * np.sqrt(lam)
    else:
        coords = np.zeros((1, 2))
    emb = LocalEmbedding(coords=coords, eigvals=lam,
                         stress=stress(coords, matrix),
                         clamped_eigs=clamped, clamped_mass=clamped_mass,
                         degenerate=bool(np.allclose(D, 0.0)))
    return emb


def stress(coords, matrix: PatchDistanceMatrix) -> float:
    """Sum of squared distance residuals over the measured off-diagonal pairs."""
    coords = np.asarray(coords, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff ** 2).sum(-1))
    mask = np.triu(matrix.measured, k=1)
    return float(((d - matrix.dist)[mask] ** 2).sum())


def _guttman_step(coords, dist, weights, v_pinv):
    diff = coords[:, None, :] - coords[None, :, :]
    d = np.sqrt((diff ** 2).sum(-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, dist / np.where(d > 0, d, 1.0), 0.0)
    B = -weights * ratio
    np.fill_diagonal(B, 0.0)
    np.fill_diagonal(B, -B.sum(axis=1))
    return v_pinv @ (B @ coords)


def refine_majorization(embedding: LocalEmbedding, matrix: PatchDistanceMatrix,
                        max_iters: int = 200, tol: float = 1e-10) -> LocalEmbedding:
    """Iterative majorization of the measured-pair stress.

    Stops when the relative stress improvement drops below ``tol`` or
    after ``max_iters`` iterations.  Coincident points are handled by the
    inv(0) = 0 convention inside the update.
    """
    n = matrix.size
    weights = matrix.measured.astype(float)
    np.fill_diagonal(weights, 0.0)
    if not weights.any() or n < 2:
        return embedding
    V = -weights.copy()
    np.fill_diagonal(V, weights.sum(axis=1))
    v_pinv = np.linalg.pinv(V)

    coords = embedding.coords.copy()
    s = stress(coords, matrix)
    trace = [s]
    for _ in range(max_iters):
        new = _guttman_step(coords, matrix.dist, weights, v_pinv)
        s_new = stress(new, matrix)
        if s_new > s + 1e-12:          # numerical safeguard; Guttman is monotone
            break
        coords, s_prev, s = new, s, s_new
        trace.append(s)
        if s_prev - s < tol * max(s_prev, 1e-300):
            break
    return LocalEmbedding(coords=coords, eigvals=embedding.eigvals, stress=s,
                          clamped_eigs=embedding.clamped_eigs,
                          clamped_mass=embedding.clamped_mass,
                          degenerate=embedding.degenerate, stress_trace=trace)


def refine_with_anchors(coords, fixed_mask, matrix: PatchDistanceMatrix,
                        max_iters: int = 2000, tol: float = 1e-16):
    """Majorization with a subset of points held fixed (anchored SMACOF).

    Returns (coords, stress_trace).  Rows of ``coords`` where
    ``fixed_mask`` is True are never moved; the free block update solves
    the restricted Guttman system, keeping the stress non-increasing.
    """
    coords = np.asarray(coords, dtype=float).copy()
    fixed = np.asarray(fixed_mask, dtype=bool)
    free = ~fixed
    if not free.any():
        return coords, [stress(coords, matrix)]
    weights = matrix.measured.astype(float)
    np.fill_diagonal(weights, 0.0)
    V = -weights.copy()
    np.fill_diagonal(V, weights.sum(axis=1))
    Vff = V[np.ix_(free, free)]
    Vfc = V[np.ix_(free, fixed)]
    # Each free component must touch an anchor for Vff to be invertible.
    Vff_inv = np.linalg.pinv(Vff)

    s = stress(coords, matrix)
    trace = [s]
    for _ in range(max_iters):
        diff = coords[:, None, :] - coords[None, :, :]
        d = np.sqrt((diff ** 2).sum(-1))
        ratio = np.where(d > 0, matrix.dist / np.where(d > 0, d, 1.0), 0.0)
        B = -weights * ratio
        np.fill_diagonal(B, 0.0)
        np.fill_diagonal(B, -B.sum(axis=1))
        rhs = (B @ coords)[free] - Vfc @ coords[fixed]
        new = coords.copy()
        new[free] = Vff_inv @ rhs
        s_new = stress(new, matrix)
        if s_new > s + 1e-12:
            break
        coords, s_prev, s = new, s, s_new
        trace.append(s)
        if s_prev - s < tol * max(s_prev, 1e-300):
            break
    return coords, trace


def localize_patch(patch, measurements, max_iters: int = 200, tol: float = 1e-10,
                   restarts: int = 30, seed: int = 0):
    """Completion + MDS + majorization for one patch; returns the patch
    distance matrix and the refined embedding.

    When completion leaves the MDS initialization in a poor stress basin
    (relative stress above 1e-8), up to ``restarts`` seeded random
    restarts are majorized and the lowest-stress embedding wins.
    """
    matrix = complete_distances(patch, measurements)
    emb = classical_mds(matrix)
    emb = refine_majorization(emb, matrix, max_iters=max_iters, tol=tol)
    scale = float((matrix.dist[np.triu(matrix.measured, k=1)] ** 2).sum())
    eta = getattr(measurements, "noise_factor", 0.0)
    eta = 0.0 if not np.isfinite(eta) else eta
    # below this the embedding is already noise-limited; restarts cannot help
    floor = (1e-8 + 3.0 * eta * eta) * scale
    if scale > 0 and emb.stress > floor and restarts > 0:
        rng = np.random.default_rng(seed + 7919 * patch.anchor)
        span = float(matrix.dist.max())
        for _ in range(restarts):
            init = LocalEmbedding(coords=rng.uniform(-span, span, (matrix.size, 2)),
                                  eigvals=emb.eigvals, stress=np.inf)
            cand = refine_majorization(init, matrix, max_iters=max(max_iters, 500),
                                       tol=tol)
            if cand.stress < emb.stress:
                emb = cand
            if emb.stress <= max(1e-10 * scale, 0.5 * floor):
                break
    return matrix, emb
