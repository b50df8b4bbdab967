"""Anchored graph realization: SDP feasibility over the block matrix chi.

The variable is chi = [[I_2, X], [X^T, Y]] of size (2+l) x (2+l), where
column i of X is end-node i's coordinate and Y accumulates the Gram
block.  Every distance constraint is a rank-1 quadratic form
u^T chi u = d^2: end-end pairs use u = e_i - e_j over the Y block, and
end-gateway pairs use u = (anchor; -e_i), which expands to
|a|^2 - 2 a.x_i + Y_ii = d^2.  The identity block is pinned by three more
rank-1 constraints (e_1, e_2, e_1+e_2).

Feasibility is solved with Dykstra alternating projections between the
PSD cone (eigenvalue clipping) and the affine constraint set (closed-form
correction through the Gram matrix of the constraint functionals).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import edge_key
from .sync import landmark_align, DegenerateConfigurationError


class UnanchorableError(ValueError):
    """No end-gateway constraints: the absolute frame cannot be pinned."""


class InfeasibleOrSlowError(RuntimeError):
    """Alternating projections did not reach tolerance; carries residuals."""

    def __init__(self, residuals):
        self.residuals = residuals
        super().__init__(f"no convergence after {len(residuals)} sweeps; "
                         f"final residual {residuals[-1]:.3e}")


class SingularStitchError(np.linalg.LinAlgError):
    """Stitch system ill-conditioned; increase the Lagrangian mu."""


@dataclass
class AnchoredProblem:
    gateway_coords: np.ndarray      # (s, 2) fixed anchors
    num_end_nodes: int
    constraints: list               # ("ll", i, j, d) or ("ls", i, k, d)
    rho: float = 1e-5               # well-localized tolerance on omega
    noise_factor: float = 0.0       # widens equalities to intervals when > 0

    @property
    def dim(self):
        return 2 + self.num_end_nodes


def build_chi_problem(network, measurements, rho=1e-5) -> AnchoredProblem:
    """One constraint per measured end-end or end-gateway pair."""
    if network.num_gateways < 1:
        raise UnanchorableError("need at least one gateway")
    l = network.num_end_nodes
    constraints = []
    for (a, b) in sorted(network.edges):
        if not measurements.has(a, b):
            continue
        d = measurements.get(a, b)
        if b < l:
            constraints.append(("ll", a, b, d))
        else:
            constraints.append(("ls", a, b - l, d))
    if not any(c[0] == "ls" for c in constraints):
        raise UnanchorableError("no gateway-adjacent constraints")
    eta = measurements.noise_factor
    return AnchoredProblem(gateway_coords=np.asarray(network.gateway_coords, dtype=float),
                           num_end_nodes=l, constraints=constraints, rho=rho,
                           noise_factor=0.0 if not np.isfinite(eta) else eta)


def constraint_vectors(problem: AnchoredProblem):
    """Stack of rank-1 constraint vectors with target intervals [lo, hi].

    Rows: the three identity-block pins followed by one row per distance
    constraint.  With noise, distance targets widen to
    [(d(1-eta))^2, (d(1+eta))^2].
    """
    D = problem.dim
    eta = problem.noise_factor
    rows, lo, hi = [], [], []

    for u, b in (( [1.0, 0.0], 1.0), ([0.0, 1.0], 1.0), ([1.0, 1.0], 2.0)):
        v = np.zeros(D)
        v[:2] = u
        rows.append(v)
        lo.append(b)
        hi.append(b)

    for c in problem.constraints:
        v = np.zeros(D)
        if c[0] == "ll":
            _, i, j, d = c
            v[2 + i] = 1.0
            v[2 + j] = -1.0
        else:
            _, i, k, d = c
            v[:2] = problem.gateway_coords[k]
            v[2 + i] = -1.0
        rows.append(v)
        lo.append((d * (1.0 - eta)) ** 2)
        hi.append((d * (1.0 + eta)) ** 2)
    return np.array(rows), np.array(lo), np.array(hi)


@dataclass
class SDPResult:
    chi: np.ndarray
    coords: np.ndarray              # (l, 2)
    omega: np.ndarray               # (l,) localization slack per end-node
    residuals: list
    converged: bool
    sweeps: int
    min_eig: float


def _chi_from_coords(problem, coords):
    l = problem.num_end_nodes
    X = np.zeros((2, l)) if coords is None else np.asarray(coords, dtype=float).T
    V = np.hstack([np.eye(2), X])
    return V.T @ V


def solve_sdp_feasibility(problem: AnchoredProblem, tol=1e-6, max_sweeps=5000,
                          init_coords=None, raise_on_fail=True) -> SDPResult:
    """Alternating projections onto the PSD cone and the constraint set.

    Equality problems (zero noise) run Dykstra iterations with the exact
    affine projection through the Gram matrix of the constraint
    functionals, reaching tight tolerances.  Interval problems run plain
    POCS sweeps projecting sequentially onto each violated slab; the
    equality pins leave the intersection without interior, so only coarse
    tolerances (~1e-3 relative) are practical there, and a warm
    ``init_coords`` matters.

    Extracts end-node coordinates from the X block and the slack
    omega = diag(Y - X^T X); omega_i < rho marks node i well-localized.
    """
    U, lo, hi = constraint_vectors(problem)
    equalities = bool(np.all(lo == hi))
    G = (U @ U.T) ** 2
    if equalities:
        try:
            cho = scipy.linalg.cho_factor(
                G + 1e-12 * np.trace(G) / len(G) * np.eye(len(G)))
            solve_g = lambda r: scipy.linalg.cho_solve(cho, r)
        except np.linalg.LinAlgError:
            Gp = np.linalg.pinv(G)
            solve_g = lambda r: Gp @ r
    norms = np.diag(G)          # ||u u^T||_F^2 per constraint

    def values(X):
        return np.einsum("cd,cd->c", U @ X, U)

    def project_affine(X):
        v = values(X)
        y = solve_g(np.clip(v, lo, hi) - v)
        return X + (U * y[:, None]).T @ U

    def project_slabs(X):
        for c in range(len(U)):
            u = U[c]
            v = float(u @ X @ u)
            t = min(max(v, lo[c]), hi[c])
            if t != v:
                X = X + ((t - v) / norms[c]) * np.outer(u, u)
        return X

    def project_psd(X):
        w, V = np.linalg.eigh(0.5 * (X + X.T))
        wc = np.clip(w, 0.0, None)
        return (V * wc) @ V.T, float(w[0])

    X = _chi_from_coords(problem, init_coords)
    p = np.zeros_like(X)
    q = np.zeros_like(X)
    residuals = []
    converged = False
    min_eig = 0.0
    sweeps = 0
    best = (np.inf, X, min_eig)
    for sweeps in range(1, max_sweeps + 1):
        if equalities:
            y = project_affine(X + p)
            p = X + p - y
            X, min_eig = project_psd(y + q)
            q = y + q - X
        else:
            X, min_eig = project_psd(project_slabs(X))
        v = values(X)
        viol = np.maximum(lo - v, np.maximum(v - hi, 0.0))
        res = float(np.max(viol / np.maximum(1.0, hi)))   # relative to target scale
        residuals.append(res)
        if res < best[0]:
            best = (res, X, min_eig)
        if res <= tol:
            converged = True
            break
    if not converged:
        _, X, min_eig = best
        if raise_on_fail:
            raise InfeasibleOrSlowError(residuals)

    coords = X[:2, 2:].T
    Y = X[2:, 2:]
    omega = np.diag(Y) - np.sum(coords ** 2, axis=1)
    return SDPResult(chi=X, coords=coords, omega=omega, residuals=residuals,
                     converged=converged, sweeps=sweeps, min_eig=min_eig)


def well_localized_subset(omega, rho):
    """Indices with localization slack strictly below rho."""
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("omega must be finite")
    return [int(i) for i in np.nonzero(omega < rho)[0]]


# ---------------------------------------------------------------------------
# frame registration (relative sync frame -> absolute gateway frame)


def multilaterate(points, dists):
    """Position from >= 3 reference points and distances (linearized LS)."""
    points = np.asarray(points, dtype=float)
    dists = np.asarray(dists, dtype=float)
    if len(points) < 3:
        raise ValueError("need at least 3 references")
    p0, d0 = points[0], dists[0]
    A = 2.0 * (points[1:] - p0)
    b = (np.sum(points[1:] ** 2, axis=1) - np.sum(p0 ** 2)
         - dists[1:] ** 2 + d0 ** 2)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol


def register_to_anchors(sync_coords, measurements, network):
    """Rigid-register relative coordinates to the absolute gateway frame.

    Each gateway with >= 3 measured end-node distances is multilaterated
    in the relative frame; the resulting point set is rigidly aligned
    (reflection allowed) onto the true gateway positions.  Returns the
    registered coordinates, or None when too few gateways are placeable.
    """
    l = network.num_end_nodes
    sync_coords = np.asarray(sync_coords, dtype=float)
    placed_rel, placed_abs = [], []
    for k in range(network.num_gateways):
        gid = l + k
        nbrs = [a for (a, b) in network.edges
                if b == gid and measurements.has(a, b)]
        if len(nbrs) < 3:
            continue
        dists = [measurements.get(a, gid) for a in nbrs]
        placed_rel.append(multilaterate(sync_coords[nbrs], dists))
        placed_abs.append(network.gateway_coords[k])
    if len(placed_rel) < 3:
        return None
    try:
        fit = landmark_align(np.array(placed_rel), np.array(placed_abs),
                             fix_scale=True, allow_reflection=True)
    except DegenerateConfigurationError:
        return None
    return fit.apply(sync_coords)


# ---------------------------------------------------------------------------
# regularized least-squares stitching


@dataclass
class StitchProblem:
    """Blocks of the regularized fusion system.

    L: end-end measurement block (c x c); S: end-gateway block (c x k);
    W: gateway-gateway block (k x k); D_L / D_W: the matching diagonal
    weight-sum blocks; sigma: per-gateway sign (+1 cooperative,
    -1 competitive); mu: Lagrangian regularizer.
    """

    L: np.ndarray
    S: np.ndarray
    D_L: np.ndarray
    sigma: np.ndarray
    mu: float
    W: np.ndarray | None = None
    D_W: np.ndarray | None = None

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.S.shape[0] != self.L.shape[0] or len(self.sigma) != self.S.shape[1]:
            raise ValueError("inconsistent block dimensions")


def build_stitch_problem(network, measurements, mu=1.0, sigma=None) -> StitchProblem:
    """Assemble the fusion blocks from the measured distance maps.

    D_L is the diagonal of row sums of L, which gives the system matrix
    D_L - L + mu*I a graph-Laplacian structure (positive definite for any
    mu > 0).
    """
    l, s = network.num_end_nodes, network.num_gateways
    L = np.zeros((l, l))
    S = np.zeros((l, s))
    for (a, b) in network.edges:
        if not measurements.has(a, b):
            continue
        d = measurements.get(a, b)
        if b < l:
            L[a, b] = L[b, a] = d
        else:
            S[a, b - l] = d
    D_L = np.diag(L.sum(axis=1))
    if sigma is None:
        sigma = np.ones(s)
    return StitchProblem(L=L, S=S, D_L=D_L, sigma=np.asarray(sigma, dtype=float), mu=mu)


def stitch_global(problem: StitchProblem):
    """Closed-form minimizer (D_L - L + mu I)^{-1} (S sigma)."""
    A = problem.D_L - problem.L + problem.mu * np.eye(problem.L.shape[0])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularStitchError(
            f"stitch system condition number {cond:.3e}; increase mu")
    return np.linalg.solve(A, problem.S @ problem.sigma)
