"""Measurement graphs and synchronization solvers.

Internally an SE(d) element ``(mu, b)`` is handled as the MMG(d, 1) element
``(mu, 1, b[:, None])``: the group laws agree, so ratios, distances and the
linear least-squares baselines share one code path.
"""
from __future__ import annotations

import importlib
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .contraction import (ZASSENHAUS_RADIUS, decompose_opt_arrays, decompose_so_arrays,
                          phi_inverse_arrays, phi_se_arrays, psi_mmg_arrays, psi_se_arrays)
from .errors import (BoundaryOfInjectivity, CartanSyncError, ConfigInvalid, DegenerateNullSpace,
                     DimensionMismatch, EigSolverFailure, GraphDisconnected, LambdaTooSmall,
                     NoConvergence, NotInImage)
from .groups import (MMGElement, RigidMotion, check_rotation, mat_exp, project_to_rotation,
                     skew_embed_batch)

KINDS = ("SE", "MMG", "SO", "O")


@dataclass(frozen=True)
class GroupSpec:
    """Group tag. ``d`` is the matrix order for SO/O; ``l`` only matters for MMG."""

    kind: str
    d: int
    l: int = 1  # noqa: E741

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigInvalid(f"unknown group kind {self.kind!r}")
        if self.d < 1 or (self.kind == "MMG" and self.l < 1):
            raise ConfigInvalid(f"invalid dimensions d={self.d}, l={self.l}")
        if self.kind != "MMG":
            object.__setattr__(self, "l", 1)

    @property
    def compact(self) -> bool:
        return self.kind in ("SO", "O")

    @property
    def dim_p(self) -> int:
        return 0 if self.compact else self.d * self.l

    def label(self) -> str:
        return f"MMG({self.d},{self.l})" if self.kind == "MMG" else f"{self.kind}({self.d})"

    def identity(self):
        if self.kind == "SE":
            return RigidMotion.identity(self.d)
        if self.kind == "MMG":
            return MMGElement.identity(self.d, self.l)
        return np.eye(self.d)

    def check(self, g):
        """Validate ``g`` as an element of this group; returns it (arrays normalised)."""
        if self.kind == "SE":
            ok = isinstance(g, RigidMotion) and g.d == self.d
        elif self.kind == "MMG":
            ok = isinstance(g, MMGElement) and (g.d, g.l) == (self.d, self.l)
        else:
            g = check_rotation(g, special=self.kind == "SO")
            ok = g.shape == (self.d, self.d)
        if not ok:
            raise DimensionMismatch(f"element {g!r} is not in {self.label()}")
        return g


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    w: float
    g: object  # measures g_i g_j^{-1}


# --------------------------------------------------------------------------
# Stacked element arrays
# --------------------------------------------------------------------------


@dataclass
class Stack:
    """A stack of motion-group elements ``(mu, eta, T)`` with ``T`` of shape (N, d, l)."""

    mu: np.ndarray
    eta: np.ndarray
    T: np.ndarray

    @classmethod
    def from_elements(cls, elements: Sequence, group: GroupSpec) -> "Stack":
        if group.kind == "SE":
            mu = np.array([g.mu for g in elements]).reshape(-1, group.d, group.d)
            T = np.array([g.b for g in elements]).reshape(-1, group.d, 1)
            return cls(mu, np.ones((len(elements), 1, 1)), T)
        if group.kind == "MMG":
            return cls(np.array([g.mu for g in elements]).reshape(-1, group.d, group.d),
                       np.array([g.eta for g in elements]).reshape(-1, group.l, group.l),
                       np.array([g.B for g in elements]).reshape(-1, group.d, group.l))
        raise DimensionMismatch("stacks hold motion-group elements only")

    def to_elements(self, group: GroupSpec) -> list:
        if group.kind == "SE":
            return [RigidMotion(m, t[:, 0]) for m, t in zip(self.mu, self.T)]
        return [MMGElement(m, e, t) for m, e, t in zip(self.mu, self.eta, self.T)]

    def __len__(self):
        return self.mu.shape[0]

    def take(self, idx) -> "Stack":
        return Stack(self.mu[idx], self.eta[idx], self.T[idx])

    def inv(self) -> "Stack":
        muT = np.swapaxes(self.mu, -1, -2)
        etaT = np.swapaxes(self.eta, -1, -2)
        return Stack(muT, etaT, -muT @ self.T @ self.eta)

    def __matmul__(self, other: "Stack") -> "Stack":
        return Stack(self.mu @ other.mu, self.eta @ other.eta,
                     self.mu @ other.T @ np.swapaxes(self.eta, -1, -2) + self.T)

    def ratios(self, I: np.ndarray, J: np.ndarray) -> "Stack":
        """``g_i g_j^{-1}`` for every index pair."""
        return self.take(I) @ self.take(J).inv()

    def sqdist(self, other: "Stack") -> np.ndarray:
        return (np.sum((self.mu - other.mu) ** 2, axis=(-2, -1))
                + np.sum((self.eta - other.eta) ** 2, axis=(-2, -1))
                + np.sum((self.T - other.T) ** 2, axis=(-2, -1)))

    def motion_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.T ** 2, axis=(-2, -1)))

    def gauge_fix(self) -> "Stack":
        """Right-multiply so that element 0 becomes the identity."""
        g0 = self.take(slice(0, 1)).inv()
        n = len(self)
        rep = Stack(np.repeat(g0.mu, n, 0), np.repeat(g0.eta, n, 0), np.repeat(g0.T, n, 0))
        return self @ rep


# --------------------------------------------------------------------------
# Graph
# --------------------------------------------------------------------------


class MeasurementGraph:
    """Undirected weighted graph with one group-valued measurement per edge.

    Vertices are 0-based. Edges with ``w = 0`` are kept but do not count for
    connectivity, matching their absence from every solver's objective.
    """

    def __init__(self, n: int, group: GroupSpec, edges: Sequence[Edge], check_connected: bool = True):
        if n < 1:
            raise ConfigInvalid("a graph needs at least one vertex")
        self.n = int(n)
        self.group = group
        seen = set()
        clean = []
        for e in edges:
            i, j = int(e.i), int(e.j)
            if not 0 <= i < j < n:
                raise ConfigInvalid(f"edge ({i}, {j}) must satisfy 0 <= i < j < n = {n}")
            if (i, j) in seen:
                raise ConfigInvalid(f"duplicate edge ({i}, {j})")
            if not (e.w >= 0 and np.isfinite(e.w)):
                raise ConfigInvalid(f"edge ({i}, {j}) has invalid weight {e.w}")
            seen.add((i, j))
            clean.append(Edge(i, j, float(e.w), group.check(e.g)))
        self.edges: List[Edge] = clean
        self.I = np.array([e.i for e in clean], dtype=int)
        self.J = np.array([e.j for e in clean], dtype=int)
        self.W = np.array([e.w for e in clean], dtype=float)
        self._stack: Optional[Stack] = None
        self._mats: Optional[np.ndarray] = None
        self.meta: Dict[str, object] = {}
        if check_connected and not self.is_connected():
            raise GraphDisconnected(f"graph on {n} vertices with {len(clean)} edges is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        pos = self.W > 0
        A = coo_matrix((np.ones(pos.sum()), (self.I[pos], self.J[pos])), shape=(self.n, self.n))
        ncomp, _ = connected_components(A, directed=False)
        return ncomp == 1

    def degrees(self) -> np.ndarray:
        return np.bincount(self.I, self.W, self.n) + np.bincount(self.J, self.W, self.n)

    @property
    def stack(self) -> Stack:
        if self._stack is None:
            self._stack = Stack.from_elements([e.g for e in self.edges], self.group)
        return self._stack

    @property
    def matrices(self) -> np.ndarray:
        """Edge measurements of a compact-group graph as an (m, d, d) array."""
        if not self.group.compact:
            raise DimensionMismatch(f"matrices is defined for SO/O graphs, not {self.group.label()}")
        if self._mats is None:
            self._mats = np.array([e.g for e in self.edges]).reshape(-1, self.group.d, self.group.d)
        return self._mats

    @classmethod
    def compact_from_arrays(cls, n: int, kind: str, I, J, W, mats) -> "MeasurementGraph":
        mats = np.asarray(mats, dtype=float)
        group = GroupSpec(kind, mats.shape[-1])
        return cls(n, group, [Edge(int(i), int(j), float(w), m) for i, j, w, m in zip(I, J, W, mats)])

    def subgraph_part(self, part: str) -> "MeasurementGraph":
        """The graph of ``mu`` (part="mu") or ``eta`` (part="eta") components over O/SO."""
        s = self.stack
        kind = "SO" if self.group.kind == "SE" else "O"
        return MeasurementGraph.compact_from_arrays(self.n, kind, self.I, self.J, self.W,
                                                    s.mu if part == "mu" else s.eta)


@dataclass
class SyncSolution:
    estimates: list
    lambda_used: Optional[float] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)


# --------------------------------------------------------------------------
# Compact solvers
# --------------------------------------------------------------------------


def _spectral_arrays(n: int, I, J, W, R: np.ndarray, special: bool, info: Optional[dict] = None) -> np.ndarray:
    d = R.shape[-1]
    deg = np.bincount(I, W, n) + np.bincount(J, W, n)
    if np.any(deg <= 0):
        raise GraphDisconnected("vertex with zero weighted degree")
    M = np.zeros((n, d, n, d))
    M[I, :, J, :] = W[:, None, None] * R
    M[J, :, I, :] = W[:, None, None] * np.swapaxes(R, -1, -2)
    M = M.reshape(n * d, n * d)
    s = np.repeat(1.0 / np.sqrt(deg), d)
    Hs = s[:, None] * M * s[None, :]
    k = min(d + 1, n * d)
    try:
        # MRRR (the default subset driver) can drop vectors of exactly repeated
        # eigenvalues, which clean data produces; bisection does not
        vals, vecs = scipy.linalg.eigh(Hs, subset_by_index=[n * d - k, n * d - 1], driver="evx")
        if vecs.shape[1] != k:
            vals, vecs = scipy.linalg.eigh(Hs)
            vals, vecs = vals[-k:], vecs[:, -k:]
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise EigSolverFailure("non-finite eigenvalues")
    V = (s[:, None] * vecs[:, -d:]).reshape(n, d, d)
    if info is not None:
        info["eigengap"] = float(vals[-d] - vals[-d - 1]) if k > d else float("nan")
    if special and np.sum(np.linalg.det(V) < 0) > n / 2:
        V[..., -1] *= -1
    Q = project_to_rotation(V, special=special)
    return Q @ Q[0].T


def spectral_sync_compact(graph: MeasurementGraph, info: Optional[dict] = None) -> np.ndarray:
    """Eigenvector synchronization over SO(d) or O(d); returns an (n, d, d) array.

    Estimate 0 is the identity. ``info``, if given, receives the eigengap
    between the d-th and (d+1)-th largest eigenvalues of the normalised
    measurement matrix.
    """
    if not graph.group.compact:
        raise DimensionMismatch(f"spectral_sync_compact needs SO/O data, got {graph.group.label()}")
    if not graph.is_connected():
        raise GraphDisconnected("graph is not connected")
    return _spectral_arrays(graph.n, graph.I, graph.J, graph.W, graph.matrices,
                            graph.group.kind == "SO", info)


CompactSolver = Callable[[MeasurementGraph], np.ndarray]
_SOLVERS: Dict[str, CompactSolver] = {"spectral": spectral_sync_compact}


def register_compact_solver(name: str, fn: CompactSolver) -> None:
    _SOLVERS[name] = fn


def resolve_solver(choice: Union[str, CompactSolver]) -> CompactSolver:
    """A callable, a registered name, or ``"package.module:function"``."""
    if callable(choice):
        return choice
    if choice in _SOLVERS:
        return _SOLVERS[choice]
    if isinstance(choice, str) and ":" in choice:
        mod, _, attr = choice.partition(":")
        try:
            return getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigInvalid(f"cannot load solver {choice!r}: {exc}") from exc
    raise ConfigInvalid(f"unknown compact solver {choice!r}")


def _run_compact(solver: CompactSolver, graph: MeasurementGraph, info: dict) -> np.ndarray:
    if solver is spectral_sync_compact:
        return spectral_sync_compact(graph, info)
    out = np.asarray(solver(graph), dtype=float)
    N = graph.group.d
    if out.shape != (graph.n, N, N):
        raise DimensionMismatch(f"plug-in solver returned shape {out.shape}, expected {(graph.n, N, N)}")
    for Q in out:
        check_rotation(Q, tol=1e-8)
    return out


# --------------------------------------------------------------------------
# Objectives
# --------------------------------------------------------------------------


def _edge_residuals(est: Stack, meas: Stack, I, J) -> np.ndarray:
    return est.ratios(I, J).sqdist(meas)


def objective(estimates, graph: MeasurementGraph) -> float:
    """Weighted sum of squared hybrid distances between estimated and measured ratios."""
    est = estimates if isinstance(estimates, Stack) else Stack.from_elements(estimates, graph.group)
    return float(np.sum(graph.W * _edge_residuals(est, graph.stack, graph.I, graph.J)))


# --------------------------------------------------------------------------
# Contraction pipeline
# --------------------------------------------------------------------------


def _compactify(meas: Stack, group: GroupSpec, lam: float, compaction: str) -> np.ndarray:
    if compaction == "phi":
        if group.kind != "SE":
            raise ConfigInvalid("the polar-decomposition map is defined for SE(d) only")
        return phi_se_arrays(meas.mu, meas.T[..., 0], lam)
    if compaction != "psi":
        raise ConfigInvalid(f"unknown compaction {compaction!r}")
    if group.kind == "SE":
        return psi_se_arrays(meas.mu, meas.T[..., 0], lam)
    return psi_mmg_arrays(meas.mu, meas.eta, meas.T, lam)


class _BackMap:
    """Maps compact estimates back to the motion group; remembers MMG warm starts."""

    def __init__(self, group: GroupSpec, lam: float, compaction: str):
        self.group, self.lam, self.compaction = group, lam, compaction
        self.warm: Optional[np.ndarray] = None

    def __call__(self, Qs: np.ndarray) -> Stack:
        g, lam = self.group, self.lam
        n = Qs.shape[0]
        if g.kind == "SE":
            if self.compaction == "phi":
                b, mu = phi_inverse_arrays(Qs, lam)
            else:
                b, mu = decompose_so_arrays(Qs)
                b = lam * b
            return Stack(mu, np.ones((n, 1, 1)), b[..., None])
        B, mu, eta, _, _ = decompose_opt_arrays(Qs, g.d, g.l, P0=self.warm)
        return Stack(mu, eta, lam * B)

    def accept(self, st: Stack):
        if self.group.kind == "MMG":
            self.warm = st.T / self.lam


def optimize_global_alignment(compact: np.ndarray, graph: MeasurementGraph, lam: float,
                              budget: Optional[int] = None, compaction: str = "psi",
                              seed: int = 0, _backmap: Optional[_BackMap] = None) -> np.ndarray:
    """Search ``v`` in the non-compact part of the algebra so that back-mapping
    ``Q_i exp(v)`` best explains the measurements.

    The objective is the weighted sum of (unsquared) hybrid distances between
    estimated and measured ratios. Coordinate pattern search with step
    halving, at most ``budget`` objective evaluations (default 50 per
    dimension). Returns ``v`` as a (d, l) array; the zero vector if nothing
    better was found.
    """
    group = graph.group
    d, l = group.d, group.l
    dim = d * l
    if budget is None:
        budget = 50 * dim
    v = np.zeros((d, l))
    if budget <= 0:
        return v
    I, J, W = graph.I, graph.J, graph.W
    meas = graph.stack
    if graph.m > 2000:
        idx = np.sort(np.random.default_rng(seed).choice(graph.m, 2000, replace=False))
        I, J, W, meas = I[idx], J[idx], W[idx], meas.take(idx)
    back = _backmap or _BackMap(group, lam, compaction)
    cache: Dict[bytes, float] = {}

    def evaluate(x):
        key = x.tobytes()
        if key in cache:
            return cache[key], None
        try:
            Qx = compact @ mat_exp(skew_embed_batch(x[None]))[0]
            st = back(Qx)
            f = float(np.sum(W * np.sqrt(_edge_residuals(st, meas, I, J))))
        except (BoundaryOfInjectivity, NoConvergence, NotInImage):
            f, st = np.inf, None
        cache[key] = f
        return f, st

    best, st = evaluate(v)
    if st is not None:
        back.accept(st)
    evals = 1
    # initial step from the size of the compact motion parts
    step = 0.5 * float(np.median(back(compact).motion_norms())) / lam if st is not None else 0.1
    step = max(step, 1e-3)
    min_step = 1e-9 * step
    while evals < budget and step > min_step:
        improved = False
        for c in range(dim):
            for sgn in (1.0, -1.0):
                if evals >= budget:
                    break
                x = v.copy()
                x.flat[c] += sgn * step
                f, sx = evaluate(x)
                evals += 1
                if f < best:
                    best, v, improved = f, x, True
                    back.accept(sx)
                    break
        if not improved:
            step *= 0.5
    return v


def lambda_lower_bound(graph: MeasurementGraph) -> float:
    """``(2 / 0.59) * max |v_ij|``: the Zassenhaus-radius lower bound on lambda."""
    norms = _active_norms(graph)
    if norms.size == 0:
        return 0.0
    return 2.0 / ZASSENHAUS_RADIUS * float(np.max(norms))


def _active_norms(graph: MeasurementGraph) -> np.ndarray:
    # zero-weight edges carry no information and must not constrain lambda
    return graph.stack.motion_norms()[graph.W > 0]


def _check_lambda(graph: MeasurementGraph, lam: float):
    if not lam >= 1:
        raise LambdaTooSmall(f"lambda must be >= 1, got {lam}")
    norms = _active_norms(graph)
    vmax = float(np.max(norms)) if norms.size else 0.0
    if vmax / lam >= np.pi:
        raise LambdaTooSmall(f"max |v|/lambda = {vmax / lam:.4g} >= pi: contraction not injectivity-safe")
    lo = lambda_lower_bound(graph)
    if lam < lo * (1 - 1e-12):
        raise LambdaTooSmall(f"lambda = {lam:.6g} below the radius bound {lo:.6g}")


def contraction_sync(graph: MeasurementGraph, lam: Union[float, str, None] = "auto",
                     solver: Union[str, CompactSolver] = "spectral",
                     align_budget: Optional[int] = None, compaction: str = "psi",
                     lambda_budget: int = 8) -> SyncSolution:
    """Synchronize over SE(d) or MMG(d, l) through a compact group.

    Every measurement is compactified, the compact problem is solved, a global
    alignment ``exp(v)`` is searched for, and each ``Q_i exp(v)`` is mapped
    back. ``lam="auto"`` (or None) picks lambda with :func:`choose_lambda`.
    """
    if graph.group.kind not in ("SE", "MMG"):
        raise ConfigInvalid(f"contraction_sync needs SE or MMG data, got {graph.group.label()}")
    if lam is None or (isinstance(lam, str) and lam.lower() == "auto"):
        lam_v, sol = _choose_lambda(graph, lambda_budget, solver, align_budget, compaction)
        return sol
    return _contraction_fixed(graph, float(lam), solver, align_budget, compaction)


def _contraction_fixed(graph, lam, solver, align_budget, compaction) -> SyncSolution:
    t0 = time.perf_counter()
    _check_lambda(graph, lam)
    group = graph.group
    solve = resolve_solver(solver)
    Qm = _compactify(graph.stack, group, lam, compaction)
    kind = "SO" if group.kind == "SE" else "O"
    cg = MeasurementGraph.compact_from_arrays(graph.n, kind, graph.I, graph.J, graph.W, Qm)
    info: Dict[str, object] = {}
    Qs = _run_compact(solve, cg, info)
    back = _BackMap(group, lam, compaction)
    v = optimize_global_alignment(Qs, graph, lam, align_budget, compaction, _backmap=back)
    Qv = Qs @ mat_exp(skew_embed_batch(v[None]))[0]
    est = back(Qv)
    info.update(
        solver="contraction-" + (solver if isinstance(solver, str) else getattr(solver, "__name__", "plugin")),
        compaction=compaction,
        alignment=v.ravel().tolist(),
        residual=objective(est, graph),
        wall_time=time.perf_counter() - t0,
    )
    return SyncSolution(est.to_elements(group), lam, info)


def triangle_residuals(graph: MeasurementGraph, max_triangles: int = 500, seed: int = 0) -> np.ndarray:
    """Hybrid distance of ``g_ij g_jk g_ik^{-1}`` to the identity on sampled triangles."""
    pos = {(int(i), int(j)): k for k, (i, j, w) in enumerate(zip(graph.I, graph.J, graph.W)) if w > 0}
    adj: Dict[int, set] = {}
    for i, j in pos:
        adj.setdefault(i, set()).add(j)
    tris = []
    for (i, j) in pos:
        for k in adj.get(j, ()):
            if (i, k) in pos:
                tris.append((pos[(i, j)], pos[(j, k)], pos[(i, k)]))
    if not tris:
        return np.zeros(0)
    tris = np.array(tris)
    if len(tris) > max_triangles:
        tris = tris[np.random.default_rng(seed).choice(len(tris), max_triangles, replace=False)]
    s = graph.stack
    loop = s.take(tris[:, 0]) @ s.take(tris[:, 1]) @ s.take(tris[:, 2]).inv()
    N = len(loop)
    ident = Stack(np.broadcast_to(np.eye(graph.group.d), loop.mu.shape),
                  np.broadcast_to(np.eye(loop.eta.shape[-1]), loop.eta.shape), np.zeros_like(loop.T))
    return np.sqrt(loop.sqdist(ident)) if N else np.zeros(0)


def lambda_grid(graph: MeasurementGraph, budget: int) -> np.ndarray:
    """Log-spaced candidate lambdas between the radius bound and a noise-aware cap."""
    if budget < 1:
        raise ConfigInvalid("lambda budget must be >= 1")
    norms = _active_norms(graph)
    if norms.size == 0 or np.max(norms) == 0:
        return np.array([1.0])
    lo = max(1.0, lambda_lower_bound(graph))
    res = triangle_residuals(graph)
    snr = 4.0
    if res.size and np.median(res) > 0:
        snr = float(np.median(norms) / np.median(res))
    hi = lo * max(4.0, snr)
    if budget == 1:
        return np.array([np.sqrt(lo * hi)])
    return np.geomspace(lo, hi, budget)


def _choose_lambda(graph, budget, solver, align_budget, compaction):
    best_lam, best_sol, best_f = None, None, np.inf
    last_err: Optional[Exception] = None
    grid = lambda_grid(graph, budget)
    for lam in grid:
        try:
            sol = _contraction_fixed(graph, float(lam), solver, align_budget, compaction)
        except CartanSyncError as exc:
            last_err = exc
            continue
        f = sol.diagnostics["residual"]
        if f < best_f:
            best_lam, best_sol, best_f = float(lam), sol, f
    if best_sol is None:
        raise last_err
    best_sol.diagnostics["lambda_grid"] = grid.tolist()
    return best_lam, best_sol


def choose_lambda(graph: MeasurementGraph, budget: int = 8, solver: Union[str, CompactSolver] = "spectral",
                  align_budget: Optional[int] = None, compaction: str = "psi") -> float:
    """Pick lambda on a log grid by the measurement objective of the resulting solution."""
    grid = lambda_grid(graph, budget)
    if len(grid) == 1:
        return float(grid[0])
    return _choose_lambda(graph, budget, solver, align_budget, compaction)[0]


# --------------------------------------------------------------------------
# Baselines
# --------------------------------------------------------------------------


def _linear_motion_solve(graph: MeasurementGraph, mu: np.ndarray, eta: np.ndarray,
                         residual_form: str = "group") -> np.ndarray:
    """Minimum-norm weighted least squares for the motion parts given compact parts.

    ``group``: residual ``T_i - L_ij T_j R_ij - T_ij`` with ``L = mu_i mu_j^T``,
    ``R = eta_j eta_i^T``, zero on clean data. ``printed``: the alternative
    ``T_ij eta_j + mu_i mu_j^T T_j + T_i``.
    """
    n, m = graph.n, graph.m
    d, l = mu.shape[-1], eta.shape[-1]
    k = d * l
    I, J, W = graph.I, graph.J, graph.W
    Tm = graph.stack.T
    L = mu[I] @ np.swapaxes(mu[J], -1, -2)
    # column-major vec: vec(L X R) = (R^T kron L) vec(X)
    if residual_form == "group":
        R = eta[J] @ np.swapaxes(eta[I], -1, -2)
        Kj = -np.einsum("eab,ecd->ebcad", R, L).reshape(m, k, k)
        rhs = np.swapaxes(Tm, -1, -2).reshape(m, k)
    elif residual_form == "printed":
        Kj = np.einsum("ab,ecd->ebcad", np.eye(l), L).reshape(m, k, k)
        rhs = -np.swapaxes(Tm @ eta[J], -1, -2).reshape(m, k)
    else:
        raise ConfigInvalid(f"unknown residual form {residual_form!r}")
    sw = np.sqrt(W)
    A = np.zeros((m, k, n, k))
    A[np.arange(m), :, I, :] = sw[:, None, None] * np.eye(k)
    A[np.arange(m), :, J, :] += sw[:, None, None] * Kj
    # the gauge directions T_i = mu_i C eta_i^T are an exact null space; an explicit
    # cutoff keeps them out of the solution instead of amplifying rounding noise
    x, *_ = scipy.linalg.lstsq(A.reshape(m * k, n * k), (sw[:, None] * rhs).reshape(-1),
                               cond=1e-10, lapack_driver="gelsd")
    return np.swapaxes(x.reshape(n, l, d), -1, -2)


def separation_sync(graph: MeasurementGraph, solver: Union[str, CompactSolver] = "spectral",
                    residual_form: str = "group") -> SyncSolution:
    """Compact parts by synchronization, then motion parts by linear least squares.

    Works for SE(d) and MMG(d, l); for MMG the ``mu`` and ``eta`` parts are
    synchronized independently over O(d) and O(l).
    """
    t0 = time.perf_counter()
    group = graph.group
    if group.kind not in ("SE", "MMG"):
        raise ConfigInvalid(f"separation needs SE or MMG data, got {group.label()}")
    if not graph.is_connected():
        raise GraphDisconnected("graph is not connected")
    solve = resolve_solver(solver)
    info: Dict[str, object] = {}
    mu = _run_compact(solve, graph.subgraph_part("mu"), info)
    if group.kind == "MMG":
        eta = _run_compact(solve, graph.subgraph_part("eta"), {})
    else:
        eta = np.ones((graph.n, 1, 1))
    T = _linear_motion_solve(graph, mu, eta, residual_form)
    est = Stack(mu, eta, T).gauge_fix()
    info.update(solver="separation" if group.kind == "SE" else "separation-mmg",
                residual=objective(est, graph), wall_time=time.perf_counter() - t0)
    return SyncSolution(est.to_elements(group), None, info)


def separation_sync_mmg(graph: MeasurementGraph, solver: Union[str, CompactSolver] = "spectral",
                        residual_form: str = "group") -> SyncSolution:
    if graph.group.kind != "MMG":
        raise ConfigInvalid(f"separation-mmg needs MMG data, got {graph.group.label()}")
    return separation_sync(graph, solver, residual_form)


def se_spectral_sync(graph: MeasurementGraph, lambda_scale: Optional[float] = None) -> SyncSolution:
    """Null space of the twisted Laplacian built from homogeneous matrices.

    The ``d+1`` smallest right singular vectors span ``rho(g_i) A`` for an
    unknown ``A``. Clean data makes every block's last row equal, so the
    mixing is fixed in two steps: a vector ``a`` with ``last_row . a = 1``
    gives the translations, and the orthogonal complement of the last-row
    direction, whitened, gives the rotations.

    Translations are divided by ``lambda_scale`` before the matrix is built
    (default: the same radius bound contraction uses, at least 1).
    """
    t0 = time.perf_counter()
    group = graph.group
    if group.kind != "SE":
        raise ConfigInvalid(f"se-spectral needs SE data, got {group.label()}")
    if not graph.is_connected():
        raise GraphDisconnected("graph is not connected")
    if lambda_scale is None:
        lambda_scale = max(1.0, lambda_lower_bound(graph))
    if not lambda_scale > 0:
        raise ConfigInvalid("lambda_scale must be positive")
    n, d = graph.n, group.d
    N = d + 1
    I, J, W = graph.I, graph.J, graph.W
    s = graph.stack
    P = np.zeros((graph.m, N, N))
    P[:, :d, :d] = s.mu
    P[:, :d, d] = s.T[..., 0] / lambda_scale
    P[:, d, d] = 1.0
    Pinv = np.zeros_like(P)
    Pinv[:, :d, :d] = np.swapaxes(s.mu, -1, -2)
    Pinv[:, :d, d] = -np.einsum("eji,ej->ei", s.mu, P[:, :d, d])
    Pinv[:, d, d] = 1.0
    deg = graph.degrees()
    Lap = np.zeros((n, N, n, N))
    Lap[np.arange(n), :, np.arange(n), :] = deg[:, None, None] * np.eye(N)
    Lap[I, :, J, :] -= W[:, None, None] * P
    Lap[J, :, I, :] -= W[:, None, None] * Pinv
    try:
        _, sv, Vt = scipy.linalg.svd(Lap.reshape(n * N, n * N))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    V = Vt[-N:].T.reshape(n, N, N)
    R = V[:, d, :]
    _, rs, rvt = np.linalg.svd(R)
    if rs[0] <= 1e-12:
        raise DegenerateNullSpace("last rows of the null-space blocks vanish")
    u = rvt[0]
    a, *_ = np.linalg.lstsq(R, np.ones(n), rcond=None)
    Nb = scipy.linalg.null_space(u[None, :])
    Mi = V[:, :d, :] @ Nb
    S = np.mean(np.swapaxes(Mi, -1, -2) @ Mi, axis=0)
    ev = np.linalg.eigvalsh(S)
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise DegenerateNullSpace("rotation blocks of the null space are rank deficient")
    C = np.real(scipy.linalg.sqrtm(np.linalg.inv(S)))
    Rot = Mi @ C
    if np.sum(np.linalg.det(Rot) < 0) > n / 2:
        Rot[..., -1] *= -1
    mu = project_to_rotation(Rot, special=True)
    b = (V[:, :d, :] @ a) * lambda_scale
    est = Stack(mu, np.ones((n, 1, 1)), b[..., None]).gauge_fix()
    info = dict(solver="se-spectral", residual=objective(est, graph),
                singular_values=sv[-N - 1:].tolist(), wall_time=time.perf_counter() - t0)
    return SyncSolution(est.to_elements(group), None, info)


METHODS = ("contraction-spectral", "pd-spectral", "separation", "se-spectral", "separation-mmg")


def solve(graph: MeasurementGraph, method: str, lam: Union[float, str, None] = "auto",
          align_budget: Optional[int] = None) -> SyncSolution:
    """Dispatch by method name (the names used by the command line)."""
    kind = graph.group.kind
    if method == "contraction-spectral":
        return contraction_sync(graph, lam, "spectral", align_budget)
    if method == "pd-spectral":
        if kind != "SE":
            raise ConfigInvalid("pd-spectral needs SE data")
        return contraction_sync(graph, lam, "spectral", align_budget, compaction="phi")
    if method.startswith("plugin:"):
        return contraction_sync(graph, lam, method[len("plugin:"):], align_budget)
    if method == "separation":
        if kind != "SE":
            raise ConfigInvalid("separation needs SE data; use separation-mmg")
        return separation_sync(graph)
    if method == "separation-mmg":
        if kind != "MMG":
            raise ConfigInvalid("separation-mmg needs MMG data; use separation")
        return separation_sync_mmg(graph)
    if method == "se-spectral":
        if kind != "SE":
            raise ConfigInvalid("se-spectral needs SE data")
        # a numeric lambda doubles as the translation scale
        scale = None if lam is None or isinstance(lam, str) else float(lam)
        sol = se_spectral_sync(graph, scale)
        sol.lambda_used = scale
        return sol
    raise ConfigInvalid(f"unknown method {method!r}")
