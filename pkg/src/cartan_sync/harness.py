"""Synthetic data, noise model, error metrics and the spectral-gap estimator."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (AllNoiseFree, CartanSyncError, ConfigInvalid, ConnectivityFailure,
                     DimensionMismatch, UnsupportedDensity)
from .groups import MMGElement, RigidMotion, mat_exp, orth_log, project_to_rotation
from .sync import Edge, GroupSpec, MeasurementGraph, Stack, solve


@dataclass(frozen=True)
class NoiseSpec:
    sigma_rot: float = 0.0
    sigma_trans: float = 0.0
    outlier_rate: float = 0.0
    p: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_rot < 0 or self.sigma_trans < 0:
            raise ConfigInvalid("noise levels must be nonnegative")
        if not 0 <= self.outlier_rate < 1:
            raise ConfigInvalid(f"outlier_rate must lie in [0, 1), got {self.outlier_rate}")
        if not 0 < self.p <= 1:
            raise ConfigInvalid(f"p must lie in (0, 1], got {self.p}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")


@dataclass
class TrialRecord:
    method: str
    group: str
    n: int
    d: int
    l: int  # noqa: E741
    p: float
    snr_db: float
    outlier_rate: float
    lam: Optional[float]
    trial: int
    seed: int
    mse: float
    runtime_ms: float
    error: str = ""


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


# --------------------------------------------------------------------------
# Ground truth
# --------------------------------------------------------------------------


def sample_ground_truth(n: int, group: GroupSpec, seed: int) -> list:
    """Random elements: rotations are projections of uniform [0, 1] matrices,
    SE translations uniform on [0, 2], MMG linear parts uniform on [0, 1]."""
    if n < 2:
        raise ConfigInvalid("need at least two elements")
    rng = rng_for(seed)
    d, l = group.d, group.l
    if group.kind == "SE":
        mus = project_to_rotation(rng.uniform(0, 1, (n, d, d)), special=True)
        bs = rng.uniform(0, 2, (n, d))
        return [RigidMotion(m, b) for m, b in zip(mus, bs)]
    if group.kind == "MMG":
        mus = project_to_rotation(rng.uniform(0, 1, (n, d, d)), special=False)
        etas = project_to_rotation(rng.uniform(0, 1, (n, l, l)), special=False)
        Bs = rng.uniform(0, 1, (n, d, l))
        return [MMGElement(m, e, B) for m, e, B in zip(mus, etas, Bs)]
    raise ConfigInvalid(f"ground truth for {group.label()} is not supported")


# --------------------------------------------------------------------------
# Noise
# --------------------------------------------------------------------------


def _skew_from_coords(c: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d, 1)
    A = np.zeros(c.shape[:-1] + (d, d))
    A[..., iu[0], iu[1]] = c
    return A - np.swapaxes(A, -1, -2)


def max_angle(S: np.ndarray) -> np.ndarray:
    """Largest rotation angle of ``exp(S)`` for skew ``S`` (its spectral norm)."""
    if S.shape[-1] < 2:
        return np.zeros(S.shape[:-2])
    return np.linalg.svd(S, compute_uv=False)[..., 0]


def wrapped_gaussian_algebra(rng: np.random.Generator, count: int, d: int, sigma: float) -> np.ndarray:
    """Skew matrices with i.i.d. N(0, sigma^2) coordinates, redrawn while the angle is >= pi."""
    k = d * (d - 1) // 2
    S = _skew_from_coords(sigma * rng.standard_normal((count, k)), d)
    for _ in range(10000):
        bad = np.flatnonzero(max_angle(S) >= np.pi)
        if bad.size == 0:
            return S
        S[bad] = _skew_from_coords(sigma * rng.standard_normal((bad.size, k)), d)
    raise ConfigInvalid(f"sigma_rot = {sigma} too large for angle clipping")


def _sample_edges(rng, n: int, p: float) -> Tuple[np.ndarray, np.ndarray]:
    I, J = np.triu_indices(n, 1)
    m = int(round(p * len(I)))
    if m < n - 1:
        raise ConnectivityFailure(f"{m} edges cannot connect {n} vertices")
    for _ in range(100):
        idx = np.sort(rng.choice(len(I), m, replace=False))
        A = coo_matrix((np.ones(m), (I[idx], J[idx])), shape=(n, n))
        if connected_components(A, directed=False)[0] == 1:
            return I[idx], J[idx]
    raise ConnectivityFailure(f"no connected sample with p = {p} after 100 draws")


def _noise_stack(rng, m: int, group: GroupSpec, spec: NoiseSpec) -> Tuple[Stack, np.ndarray, np.ndarray]:
    """Noise elements plus their algebra parts (rotation logs, linear parts)."""
    d, l = group.d, group.l
    Sm = wrapped_gaussian_algebra(rng, m, d, spec.sigma_rot)
    if group.kind == "SE":
        a = spec.sigma_trans * rng.standard_normal((m, d, 1))
        return Stack(mat_exp(Sm), np.ones((m, 1, 1)), a), Sm, a
    Se = wrapped_gaussian_algebra(rng, m, l, spec.sigma_rot)
    a = spec.sigma_trans * rng.standard_normal((m, d, l))
    return Stack(mat_exp(Sm), mat_exp(Se), a), np.concatenate([Sm.reshape(m, -1), Se.reshape(m, -1)], 1), a


def _outlier_stack(rng, k: int, group: GroupSpec) -> Stack:
    d, l = group.d, group.l
    if group.kind == "SE":
        mu = project_to_rotation(rng.standard_normal((k, d, d)), special=True)
        return Stack(mu, np.ones((k, 1, 1)), rng.uniform(0, 1, (k, d, 1)))
    mu = project_to_rotation(rng.standard_normal((k, d, d)), special=False)
    eta = project_to_rotation(rng.standard_normal((k, l, l)), special=False)
    return Stack(mu, eta, rng.uniform(0, 1, (k, d, l)))


def se_log_norms(st: Stack) -> np.ndarray:
    """Frobenius norms of the SE(d) logarithms of a stack of rigid motions."""
    d = st.mu.shape[-1]
    W = np.array([orth_log(m) for m in st.mu]).reshape(-1, d, d)
    return _se_log_norms_from_algebra(W, st.T[..., 0])


def _se_log_norms_from_algebra(W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # log [[mu, b], [0, 1]] = [[W, V^{-1} b], [0, 0]], V read off exp([[W, I], [0, 0]])
    d = W.shape[-1]
    aug = np.zeros(W.shape[:-2] + (2 * d, 2 * d))
    aug[..., :d, :d] = W
    aug[..., :d, d:] = np.eye(d)
    V = mat_exp(aug)[..., :d, d:]
    u = np.linalg.solve(V, b[..., None])[..., 0]
    return np.sqrt(np.sum(W ** 2, axis=(-2, -1)) + np.sum(u ** 2, axis=-1))


def _distance_to_identity(st: Stack) -> np.ndarray:
    d, l = st.mu.shape[-1], st.eta.shape[-1]
    return np.sqrt(np.sum((st.mu - np.eye(d)) ** 2, axis=(-2, -1))
                   + np.sum((st.eta - np.eye(l)) ** 2, axis=(-2, -1))
                   + np.sum(st.T ** 2, axis=(-2, -1)))


def snr_from_norms(signal: np.ndarray, noise: np.ndarray, tiny: float = 1e-14) -> Tuple[float, int]:
    """Average of ``20 log10(signal / noise)``; edges with noise below ``tiny``
    are dropped. Returns ``(snr_db, excluded_count)``."""
    signal = np.asarray(signal, dtype=float)
    noise = np.asarray(noise, dtype=float)
    keep = noise >= tiny
    if not np.any(keep):
        raise AllNoiseFree("every edge is noise free")
    with np.errstate(divide="ignore"):
        vals = 20.0 * np.log10(signal[keep] / noise[keep])
    return float(np.mean(vals)), int(np.sum(~keep))


def snr_db(clean_ratios: Sequence, noise_elements: Sequence) -> float:
    """SNR in decibels of a set of SE(d) (or MMG) noise draws.

    SE(d) uses Frobenius norms of group logarithms; MMG, which has no single
    matrix logarithm here, uses the hybrid distance to the identity.
    """
    if len(clean_ratios) != len(noise_elements):
        raise DimensionMismatch("one noise element per clean ratio required")
    g0 = clean_ratios[0]
    group = GroupSpec("SE", g0.d) if isinstance(g0, RigidMotion) else GroupSpec("MMG", g0.d, g0.l)
    sig = Stack.from_elements(clean_ratios, group)
    noi = Stack.from_elements(noise_elements, group)
    if group.kind == "SE":
        return snr_from_norms(se_log_norms(sig), se_log_norms(noi))[0]
    return snr_from_norms(_distance_to_identity(sig), _distance_to_identity(noi))[0]


def make_measurements(truth: Sequence, spec: NoiseSpec, trial: int = 0) -> Tuple[MeasurementGraph, float]:
    """Noisy ratios ``g_i N_ij g_j^{-1}`` on a random connected edge set.

    Exactly ``round(outlier_rate * |E|)`` kept edges are replaced by outliers.
    The SNR is computed over the remaining edges (``inf`` if all are noise
    free). ``graph.meta`` records the outlier mask and SNR bookkeeping.
    """
    if len(truth) < 2:
        raise ConfigInvalid("truth must hold at least two elements")
    g0 = truth[0]
    if isinstance(g0, RigidMotion):
        group = GroupSpec("SE", g0.d)
    elif isinstance(g0, MMGElement):
        group = GroupSpec("MMG", g0.d, g0.l)
    else:
        raise ConfigInvalid("truth must be SE or MMG elements")
    n = len(truth)
    rng = rng_for(spec.seed, trial)
    I, J = _sample_edges(rng, n, spec.p)
    m = len(I)
    gt = Stack.from_elements(truth, group)
    noise, alg_rot, alg_lin = _noise_stack(rng, m, group, spec)
    clean = gt.ratios(I, J)
    meas = gt.take(I) @ noise @ gt.take(J).inv()
    k = int(round(spec.outlier_rate * m))
    out_mask = np.zeros(m, dtype=bool)
    if k:
        oi = rng.choice(m, k, replace=False)
        out_mask[oi] = True
        o = _outlier_stack(rng, k, group)
        meas.mu[oi], meas.eta[oi], meas.T[oi] = o.mu, o.eta, o.T
    good = ~out_mask
    if group.kind == "SE":
        signal = se_log_norms(clean.take(good))
        noise_norm = _se_log_norms_from_algebra(alg_rot[good], alg_lin[good][..., 0])
    else:
        signal = _distance_to_identity(clean.take(good))
        noise_norm = _distance_to_identity(noise.take(good))
    try:
        snr, excluded = snr_from_norms(signal, noise_norm)
    except AllNoiseFree:
        snr, excluded = math.inf, int(good.sum())
    graph = MeasurementGraph(n, group, [Edge(int(i), int(j), 1.0, g) for i, j, g
                                        in zip(I, J, meas.to_elements(group))])
    graph.meta.update(outliers=out_mask, snr_db=snr, snr_excluded=excluded)
    return graph, snr


def calibrate_noise(truth: Sequence, target_db: float, spec: NoiseSpec, ratio: float = 1.0,
                    trial: int = 0, tol: float = 0.05, max_iter: int = 60) -> Tuple[NoiseSpec, MeasurementGraph, float]:
    """Bisection on a common noise level (``sigma_trans = ratio * sigma_rot``)
    until the realised SNR is within ``tol`` dB of ``target_db``."""
    lo, hi = math.log(1e-6), math.log(1.5)

    def run(logs):
        s = math.exp(logs)
        sp = replace(spec, sigma_rot=s, sigma_trans=ratio * s)
        g, snr = make_measurements(truth, sp, trial)
        return sp, g, snr

    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        sp, g, snr = run(mid)
        if best is None or abs(snr - target_db) < abs(best[2] - target_db):
            best = (sp, g, snr)
        if abs(snr - target_db) <= tol:
            break
        if snr > target_db:
            lo = mid  # too little noise
        else:
            hi = mid
    return best


# --------------------------------------------------------------------------
# Error metric
# --------------------------------------------------------------------------


def optimal_gauge(estimates: Sequence, truth: Sequence) -> Stack:
    """The gauge ``g`` minimising ``sum d_H(est_i g, truth_i)^2`` (closed form)."""
    if len(estimates) != len(truth) or len(truth) == 0:
        raise DimensionMismatch("estimates and truth must have equal nonzero length")
    if type(estimates[0]) is not type(truth[0]):
        raise DimensionMismatch("estimates and truth are from different groups")
    g0 = truth[0]
    group = GroupSpec("SE", g0.d) if isinstance(g0, RigidMotion) else GroupSpec("MMG", g0.d, g0.l)
    if (estimates[0].d, getattr(estimates[0], "l", 1)) != (group.d, group.l):
        raise DimensionMismatch("estimate and truth dimensions differ")
    e = Stack.from_elements(estimates, group)
    t = Stack.from_elements(truth, group)
    return _optimal_gauge_stacks(e, t, group.kind == "SE")


def _optimal_gauge_stacks(e: Stack, t: Stack, special: bool) -> Stack:
    eT = np.swapaxes(e.mu, -1, -2)
    mu = project_to_rotation(np.sum(eT @ t.mu, axis=0), special=special)
    eta = project_to_rotation(np.sum(np.swapaxes(e.eta, -1, -2) @ t.eta, axis=0), special=False)
    if special:
        eta = np.ones((1, 1))
    T = np.mean(eT @ (t.T - e.T) @ e.eta, axis=0)
    return Stack(mu[None], eta[None], T[None])


def mse(estimates: Sequence, truth: Sequence) -> float:
    """Mean squared hybrid distance after the optimal global gauge."""
    g = optimal_gauge(estimates, truth)
    g0 = truth[0]
    group = GroupSpec("SE", g0.d) if isinstance(g0, RigidMotion) else GroupSpec("MMG", g0.d, g0.l)
    e = Stack.from_elements(estimates, group)
    t = Stack.from_elements(truth, group)
    n = len(e)
    rep = Stack(np.repeat(g.mu, n, 0), np.repeat(g.eta, n, 0), np.repeat(g.T, n, 0))
    return float(np.mean((e @ rep).sqdist(t)))


def gauge_objective(estimates: Sequence, truth: Sequence, gauge) -> float:
    """``(1/n) sum d_H(est_i g, truth_i)^2`` for a given gauge element ``g``."""
    g0 = truth[0]
    group = GroupSpec("SE", g0.d) if isinstance(g0, RigidMotion) else GroupSpec("MMG", g0.d, g0.l)
    e = Stack.from_elements(estimates, group)
    t = Stack.from_elements(truth, group)
    gs = Stack.from_elements([gauge] * len(e), group)
    return float(np.mean((e @ gs).sqdist(t)))


# --------------------------------------------------------------------------
# Spectral-gap condition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GapRecord:
    beta: float
    gamma: float
    alpha1: float
    alpha2: float
    n: int
    offdiag_residual: float
    satisfied: bool

    @property
    def margin(self) -> float:
        return min((self.gamma - self.alpha1) * self.beta, self.gamma - self.alpha2) - 1 / math.sqrt(self.n)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["margin"] = self.margin
        return out


def spectral_gap_condition(n: int, sigma_rot: float, sigma_trans: float, d: int = 3,
                           mc_samples: int = 100_000, seed: int = 0,
                           max_truncated: float = 1e-3) -> GapRecord:
    """Monte-Carlo estimate of the noise spectral-gap condition for SE(d).

    Rotation noise is the clipped wrapped Gaussian with ``sigma_rot``; the
    translational noise density is an isotropic Gaussian with ``sigma_trans``
    (already divided by lambda), restricted to ``|x| < 1`` where the
    Jacobian factor ``|(I - x x^T)^{-1/2}| = (1 - |x|^2)^{-1/2}`` is real.
    ``gamma`` integrates that Jacobian-weighted density; ``alpha1`` and
    ``alpha2`` additionally carry ``(1 - cos|x|) / |x|^2``.
    """
    if mc_samples < 10_000:
        raise ConfigInvalid("mc_samples must be at least 1e4")
    if n < 1:
        raise ConfigInvalid("n must be positive")
    if sigma_rot < 0 or sigma_trans < 0:
        raise ConfigInvalid("noise levels must be nonnegative")
    rng = rng_for(seed, 48)
    ups = mat_exp(wrapped_gaussian_algebra(rng, mc_samples, d, sigma_rot))
    Eu = ups.mean(axis=0)
    beta = float(np.trace(Eu) / d)
    off = float(np.max(np.abs(Eu - beta * np.eye(d))))
    if off > 1e-2:
        raise UnsupportedDensity(f"rotation noise mean is not scalar (residual {off:.3g})")
    if sigma_trans == 0:
        gamma, alpha1, alpha2 = 1.0, 0.0, 0.0
    else:
        x = sigma_trans * rng.standard_normal((mc_samples, d))
        r = np.linalg.norm(x, axis=1)
        inside = r < 1.0
        if 1.0 - inside.mean() > max_truncated:
            raise UnsupportedDensity(
                f"{100 * (1 - inside.mean()):.2f}% of the translational density lies outside |x| < 1"
            )
        x, r = x[inside], r[inside]
        jac = 1.0 / np.sqrt(1.0 - r ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            q = np.where(r > 1e-8, (1 - np.cos(r)) / np.maximum(r, 1e-300) ** 2, 0.5)
        gamma = float(np.mean(jac))
        alpha1 = float(np.mean(np.mean(x ** 2, axis=1) * q * jac))
        alpha2 = float(np.mean(r ** 2 * q * jac))
    lhs = min((gamma - alpha1) * beta, gamma - alpha2)
    return GapRecord(beta, gamma, alpha1, alpha2, int(n), off, bool(lhs > 1 / math.sqrt(n)))


def beta_oracle_so3(sigma_rot: float) -> float:
    """Exact ``E[exp(S)] = beta I`` for the clipped wrapped Gaussian on so(3)."""
    if sigma_rot == 0:
        return 1.0
    dens = stats.chi(3, scale=sigma_rot).pdf
    mass = integrate.quad(dens, 0, np.pi)[0]
    ecos = integrate.quad(lambda t: np.cos(t) * dens(t), 0, np.pi)[0] / mass
    return (1 + 2 * ecos) / 3


# --------------------------------------------------------------------------
# Trials
# --------------------------------------------------------------------------


def run_trial(truth: Sequence, graph: MeasurementGraph, method: str, lam="auto", trial: int = 0,
              seed: int = 0, align_budget: Optional[int] = None, p: float = 1.0,
              outlier_rate: float = 0.0, snr: Optional[float] = None) -> TrialRecord:
    """Solve one instance and score it; solver errors become the ``error`` field."""
    g = graph.group
    t0 = time.perf_counter()
    err, val, lam_used = "", float("nan"), None
    try:
        sol = solve(graph, method, lam, align_budget)
        lam_used = sol.lambda_used
        val = mse(sol.estimates, truth)
    except CartanSyncError as exc:
        err = exc.token
    runtime = 1000.0 * (time.perf_counter() - t0)
    snr_v = graph.meta.get("snr_db", float("nan")) if snr is None else snr
    return TrialRecord(method, g.kind, graph.n, g.d, g.l if g.kind == "MMG" else 0, p, float(snr_v),
                       outlier_rate, lam_used, trial, seed, val, runtime, err)


def median_mse(records: List[TrialRecord], method: str) -> float:
    vals = [r.mse for r in records if r.method == method and not r.error]
    return float(np.median(vals)) if vals else float("nan")
