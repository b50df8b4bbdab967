"""Global patch alignment: reflections, rotations, translations.

Per-patch group elements are recovered from pairwise relative
measurements via the top eigenvector of a degree-normalized consistency
matrix (Z over signs, R over unit phases), then the global positions come
from an aggregated least-squares translation system.  Eigenvectors are
computed by shifted power iteration on the symmetric/Hermitian form
``D^{-1/2} M D^{-1/2}``, which shares the top eigenvector direction with
``D^{-1} M`` and is numerically stable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components


class UndefinedCorrelationError(ValueError):
    """Pearson correlation undefined (zero variance in a distance list)."""


class DegenerateConfigurationError(ValueError):
    """Landmarks coincident or collinear beyond recovery."""


class UnderdeterminedError(ValueError):
    """Translation system rank-deficient beyond per-component translations."""

    def __init__(self, components):
        self.components = components
        super().__init__(f"free components: {components}")


@dataclass
class SharedNodeProfile:
    """Anchor-to-shared-node distance lists for one alignable patch pair."""

    shared: tuple
    distances_a: np.ndarray
    distances_j: np.ndarray

    @property
    def n(self):
        return len(self.shared)

    @classmethod
    def from_patches(cls, patch_a, patch_j, shared, measurements):
        da = np.array([measurements.get(patch_a.anchor, i) for i in shared])
        dj = np.array([measurements.get(patch_j.anchor, i) for i in shared])
        return cls(shared=tuple(shared), distances_a=da, distances_j=dj)


def pearson_correlation(profile: SharedNodeProfile) -> float:
    """Sample Pearson coefficient of the two distance lists."""
    if profile.n < 2:
        raise UndefinedCorrelationError("need at least 2 shared nodes")
    da, dj = profile.distances_a, profile.distances_j
    sa = np.std(da, ddof=1)
    sj = np.std(dj, ddof=1)
    if sa == 0 or sj == 0:
        raise UndefinedCorrelationError("zero variance in a distance list")
    num = float(np.sum((da - da.mean()) * (dj - dj.mean())))
    return num / ((profile.n - 1) * sa * sj)


@dataclass
class LandmarkAlignment:
    """Least-squares similarity transform y ~= s R x + t."""

    scale: float
    angle: float
    translation: np.ndarray
    residual: float
    rotation: np.ndarray
    mirrored: bool = False

    def apply(self, points):
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def landmark_align(X, Y, fix_scale=False, allow_reflection=False) -> LandmarkAlignment:
    """SVD alignment of corresponding 2-D point lists (X onto Y).

    ``fix_scale`` pins the scale to 1 (rigid alignment of metric
    embeddings); ``allow_reflection`` permits an improper orthogonal map
    when it fits better.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 2 or len(X) < 2:
        raise DegenerateConfigurationError("need >= 2 corresponding 2-D landmarks")
    mu_x, mu_y = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mu_x, Y - mu_y
    if np.allclose(Xc, 0.0) or np.allclose(Yc, 0.0):
        raise DegenerateConfigurationError("all landmarks coincident")
    H = Xc.T @ Yc
    U, S, Vt = np.linalg.svd(H)
    V = Vt.T
    if allow_reflection:
        R = V @ U.T
    else:
        d = np.sign(np.linalg.det(V @ U.T))
        R = V @ np.diag([1.0, d if d != 0 else 1.0]) @ U.T
    if fix_scale:
        s = 1.0
    else:
        s = float(np.sum(Yc * (Xc @ R.T)) / np.sum(Xc ** 2))
    t = mu_y - s * (R @ mu_x)
    resid = float(np.sum((s * Xc @ R.T - Yc) ** 2))
    angle = math.atan2(R[1, 0], R[0, 0]) % (2 * math.pi)
    return LandmarkAlignment(scale=s, angle=angle, translation=t, residual=resid,
                             rotation=R, mirrored=bool(np.linalg.det(R) < 0))


def relative_reflection(X, Y, rel_tol=1e-9):
    """Chirality of the best orthogonal alignment of shared coordinates.

    Returns +1/-1 from the sign of det of the centered cross-covariance,
    or 0 when the configuration is (near-)collinear and the sign is
    undetermined.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Xc, Yc = X - X.mean(axis=0), Y - Y.mean(axis=0)
    H = Xc.T @ Yc
    det = float(np.linalg.det(H))
    scale = float(np.sqrt(np.sum(Xc ** 2) * np.sum(Yc ** 2)))
    if scale == 0 or abs(det) < rel_tol * scale:
        return 0
    return 1 if det > 0 else -1


# ---------------------------------------------------------------------------
# reflection synchronization


@dataclass
class ReflectionSystem:
    Z: np.ndarray             # N x N entries in {-1, 0, +1}
    signs: np.ndarray | None = None
    flags: list = field(default_factory=list)

    def degree(self):
        return (self.Z != 0).sum(axis=1)


def build_reflection_matrix(patch_graph, patchset, measurements,
                            threshold=-0.5) -> ReflectionSystem:
    """Pearson-gated relative reflections (the distance-correlation rule).

    z = -1 when the shared-node distance correlation falls below
    ``threshold``, +1 otherwise; pairs outside the patch graph or with
    undefined correlation get 0.
    """
    if not -1.0 < threshold < 0.0:
        raise ValueError("threshold must lie in (-1, 0)")
    N = patch_graph.num_patches
    Z = np.zeros((N, N))
    flags = []
    for (a, j), shared in patch_graph.adjacency.items():
        profile = SharedNodeProfile.from_patches(patchset[a], patchset[j],
                                                 shared, measurements)
        try:
            r = pearson_correlation(profile)
        except UndefinedCorrelationError:
            flags.append(("undefined-correlation", a, j))
            continue
        z = -1.0 if r < threshold else 1.0
        Z[a, j] = Z[j, a] = z
    return ReflectionSystem(Z=Z, flags=flags)


def build_reflection_matrix_from_embeddings(patch_graph, patchset,
                                            coords_list) -> ReflectionSystem:
    """Geometric relative reflections from the local embeddings.

    Unlike the distance-correlation gate, this uses the chirality of the
    best orthogonal alignment of the shared-node coordinates, which is
    exact on noiseless embeddings.
    """
    N = patch_graph.num_patches
    Z = np.zeros((N, N))
    flags = []
    for (a, j), shared in patch_graph.adjacency.items():
        pa, pj = patchset[a], patchset[j]
        Xa = np.array([coords_list[a][pa.index_of(i)] for i in shared])
        Xj = np.array([coords_list[j][pj.index_of(i)] for i in shared])
        z = relative_reflection(Xa, Xj)
        if z == 0:
            flags.append(("degenerate-shared-set", a, j))
            continue
        Z[a, j] = Z[j, a] = float(z)
    return ReflectionSystem(Z=Z, flags=flags)


def _top_eigenvector(B, tol=1e-12, max_iters=10000):
    """Shifted power iteration for the algebraically largest eigenpair.

    B must be symmetric/Hermitian with spectral radius <= 1 (true for
    degree-normalized consistency matrices); iterating on B + I makes the
    top algebraic eigenvalue dominant.
    """
    n = B.shape[0]
    if n == 1:
        return np.ones(1, dtype=B.dtype), float(np.real(B[0, 0]))
    v = np.ones(n, dtype=B.dtype) + 1e-6 * np.linspace(0.0, 1.0, n)
    v = v / np.linalg.norm(v)
    M = B + np.eye(n, dtype=B.dtype)
    lam = 0.0
    for _ in range(max_iters):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        w = w / nw
        lam = float(np.real(np.vdot(w, M @ w)))
        resid = float(np.linalg.norm(M @ w - lam * w))
        v = w
        if resid <= tol * max(abs(lam), 1.0):
            break
    return v, lam - 1.0


def _normalized(M):
    deg = np.abs(M).astype(bool).sum(axis=1).astype(float)
    d = np.where(deg > 0, deg, 1.0)
    scale = 1.0 / np.sqrt(d)
    return scale[:, None] * M * scale[None, :], deg


def solve_reflection_sync(system: ReflectionSystem):
    """Per-patch signs from the top eigenvector, solved per component.

    Entries with (numerically) zero eigenvector value take the sign
    implied by their highest-degree aligned neighbor and are flagged.
    The sign of the lowest-index patch of each component is normalized
    to +1 (one free global flip per component).
    """
    Z = system.Z
    N = Z.shape[0]
    signs = np.ones(N)
    flags = list(system.flags)
    B, deg = _normalized(Z)
    ncomp, labels = connected_components(np.abs(Z) > 0, directed=False)
    if ncomp > 1:
        flags.append(("disconnected", ncomp))
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        if len(idx) == 1:
            signs[idx[0]] = 1.0
            continue
        v, _ = _top_eigenvector(B[np.ix_(idx, idx)])
        v = np.real(v)
        s = np.sign(v)
        zero = np.abs(v) < 1e-12
        for local_i in np.nonzero(zero)[0]:
            nbrs = np.nonzero(Z[idx[local_i]][idx] != 0)[0]
            nbrs = sorted(nbrs, key=lambda k: -deg[idx[k]])
            s[local_i] = 1.0
            for k in nbrs:
                if not zero[k]:
                    s[local_i] = np.sign(Z[idx[local_i], idx[k]]) * s[k]
                    break
            flags.append(("zero-eigenvector-entry", int(idx[local_i])))
        if s[0] < 0:
            s = -s
        signs[idx] = s
    system.signs = signs
    system.flags = flags
    return signs


def apply_reflections(coords_list, signs):
    """Mirror patches with sign -1 (negate local x)."""
    out = []
    for coords, s in zip(coords_list, signs):
        c = np.asarray(coords, dtype=float).copy()
        if s < 0:
            c[:, 0] = -c[:, 0]
        out.append(c)
    return out


# ---------------------------------------------------------------------------
# rotation synchronization


@dataclass
class RotationSystem:
    R: np.ndarray             # N x N complex, unit modulus or zero
    phases: np.ndarray | None = None
    flags: list = field(default_factory=list)


def build_rotation_matrix(patch_graph, patchset, coords_list) -> RotationSystem:
    """Pairwise relative rotation phases from landmark alignment.

    Reflections must already be applied.  For an alignable pair (a, j),
    theta_aj is the angle carrying patch a's frame onto patch j's common
    frame offset, stored as r_aj = exp(i theta_aj) with r_ja its
    conjugate; degenerate shared sets yield a zero entry.
    """
    N = patch_graph.num_patches
    R = np.zeros((N, N), dtype=complex)
    flags = []
    for (a, j), shared in patch_graph.adjacency.items():
        pa, pj = patchset[a], patchset[j]
        Xa = np.array([coords_list[a][pa.index_of(i)] for i in shared])
        Xj = np.array([coords_list[j][pj.index_of(i)] for i in shared])
        try:
            # psi rotates patch-a shared coords onto patch-j's: psi = phi_j - phi_a
            fit = landmark_align(Xa, Xj, fix_scale=True, allow_reflection=False)
        except DegenerateConfigurationError:
            flags.append(("degenerate-landmarks", a, j))
            continue
        theta_aj = -fit.angle
        R[a, j] = cmath.exp(1j * theta_aj)
        R[j, a] = np.conj(R[a, j])
    return RotationSystem(R=R, flags=flags)


def solve_rotation_sync(system: RotationSystem):
    """Per-patch phases from the top eigenvector of the normalized R.

    The phase of the lowest-index patch of each component is normalized
    to 0 (one free global rotation per component).  Rotating patch a by
    -phase[a] brings it into the common frame.
    """
    R = system.R
    N = R.shape[0]
    phases = np.zeros(N)
    flags = list(system.flags)
    B, deg = _normalized(R)
    ncomp, labels = connected_components(np.abs(R) > 0, directed=False)
    if ncomp > 1:
        flags.append(("disconnected", ncomp))
    for c in range(ncomp):
        idx = np.nonzero(labels == c)[0]
        if len(idx) == 1:
            phases[idx[0]] = 0.0
            continue
        v, _ = _top_eigenvector(B[np.ix_(idx, idx)].astype(complex))
        mags = np.abs(v)
        ph = np.angle(v)
        for local_i in np.nonzero(mags < 1e-12)[0]:
            nbrs = np.nonzero(np.abs(R[idx[local_i]][idx]) > 0)[0]
            nbrs = sorted(nbrs, key=lambda k: -deg[idx[k]])
            ph[local_i] = 0.0
            for k in nbrs:
                if mags[k] >= 1e-12:
                    ph[local_i] = (np.angle(R[idx[local_i], idx[k]]) + ph[k])
                    break
            flags.append(("zero-eigenvector-entry", int(idx[local_i])))
        ph = (ph - ph[0]) % (2 * np.pi)
        phases[idx] = ph
    system.phases = phases
    system.flags = flags
    return phases


def apply_rotations(coords_list, phases):
    """Rotate each patch by -phase into the common frame."""
    out = []
    for coords, th in zip(coords_list, phases):
        c, s = math.cos(-th), math.sin(-th)
        R = np.array([[c, -s], [s, c]])
        out.append(np.asarray(coords, dtype=float) @ R.T)
    return out


# ---------------------------------------------------------------------------
# translation


def solve_translation(patchset, coords_list, num_nodes, edges):
    """Aggregated per-edge least-squares translation solve.

    For each graph edge covered by at least one patch, the coordinate
    differences from every covering patch are summed into one row of the
    sparse system tau x = gamma (and tau y = gamma_y), solved jointly in
    least squares.  The per-component global translation is left at the
    minimum-norm gauge.
    """
    rows = {}
    for p_idx, patch in enumerate(patchset):
        members = set(patch.members)
        coords = coords_list[p_idx]
        for (a, b) in edges:
            if a in members and b in members:
                ia, ib = patch.index_of(a), patch.index_of(b)
                cnt, rhs = rows.get((a, b), (0, np.zeros(2)))
                rows[(a, b)] = (cnt + 1, rhs + (coords[ia] - coords[ib]))

    n = num_nodes
    adj = np.zeros((n, n), dtype=bool)
    tau = np.zeros((len(rows), n))
    gamma = np.zeros((len(rows), 2))
    for r, ((a, b), (cnt, rhs)) in enumerate(sorted(rows.items())):
        tau[r, a] = cnt
        tau[r, b] = -cnt
        gamma[r] = rhs
        adj[a, b] = adj[b, a] = True

    ncomp, labels = connected_components(adj, directed=False)
    if len(rows) == 0:
        return np.zeros((n, 2)), 0.0, ncomp, labels

    sol, res, rank, _ = np.linalg.lstsq(tau, gamma, rcond=None)
    expected_rank = n - ncomp
    if rank < expected_rank:
        free = [tuple(np.nonzero(labels == c)[0]) for c in range(ncomp)]
        raise UnderdeterminedError(free)
    residual = float(np.sum((tau @ sol - gamma) ** 2))
    return sol, residual, ncomp, labels


# ---------------------------------------------------------------------------
# composition


@dataclass
class SyncResult:
    coords: np.ndarray        # (n, 2) global end-node coordinates (relative frame)
    signs: np.ndarray
    phases: np.ndarray
    reflection: ReflectionSystem
    rotation: RotationSystem
    residual: float
    num_components: int
    flags: list


def synchronize(patchset, patch_graph, embeddings, measurements, num_nodes, edges,
                reflection_method="alignment", pearson_threshold=-0.5) -> SyncResult:
    """Full staged alignment: reflections, rotations, then translations.

    ``reflection_method`` selects the pairwise reflection rule:
    "alignment" (chirality of the shared-coordinate alignment, exact on
    clean embeddings) or "pearson" (the distance-correlation gate).
    """
    coords_list = [np.asarray(e.coords, dtype=float) for e in embeddings]
    if reflection_method == "pearson":
        refl = build_reflection_matrix(patch_graph, patchset, measurements,
                                       threshold=pearson_threshold)
    elif reflection_method == "alignment":
        refl = build_reflection_matrix_from_embeddings(patch_graph, patchset, coords_list)
    else:
        raise ValueError(f"unknown reflection method {reflection_method!r}")
    signs = solve_reflection_sync(refl)
    coords_list = apply_reflections(coords_list, signs)

    rot = build_rotation_matrix(patch_graph, patchset, coords_list)
    phases = solve_rotation_sync(rot)
    coords_list = apply_rotations(coords_list, phases)

    coords, residual, ncomp, _ = solve_translation(patchset, coords_list,
                                                   num_nodes, edges)
    return SyncResult(coords=coords, signs=signs, phases=phases,
                      reflection=refl, rotation=rot, residual=residual,
                      num_components=ncomp,
                      flags=list(refl.flags) + list(rot.flags))


def dump_matrix_edgelist(M, path):
    """Diagnostic dump of a consistency matrix as 'a j value' lines."""
    M = np.asarray(M)
    with open(path, "w") as f:
        for a in range(M.shape[0]):
            for j in range(a + 1, M.shape[1]):
                if M[a, j] != 0:
                    f.write(f"{a} {j} {M[a, j]}\n")
