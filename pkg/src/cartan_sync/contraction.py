"""Compactification maps from Cartan motion groups to orthogonal groups.

``psi`` is the group contraction ``(k, v) -> exp(v / lam) k``; ``phi`` is the
orthogonal polar factor of the lam-scaled homogeneous matrix (SE(d) only).
Both come with exact inverses. The ``*_arrays`` functions are the batched
workhorses used by the solvers; the element-level functions wrap them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import (BoundaryOfInjectivity, DimensionMismatch, NoConvergence,
                     NotInImage, RadiusViolated)
from .groups import (MMGElement, RigidMotion, compose, frechet_exp, mat_exp,
                     project_to_rotation, rodrigues_exp, skew_embed_batch)

# Zassenhaus convergence radius used as the approximated-homomorphism precondition.
ZASSENHAUS_RADIUS = 0.59


@dataclass(frozen=True, eq=False)
class CompactImage:
    Q: np.ndarray
    lam: float
    kind: str  # "SE" or "MMG"
    d: int
    l: int = 1  # noqa: E741

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        if self.kind not in ("SE", "MMG"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        n = self.d + self.l
        if np.shape(self.Q) != (n, n):
            raise DimensionMismatch(f"Q has shape {np.shape(self.Q)}, expected {(n, n)}")


@dataclass(frozen=True, eq=False)
class CartanFactors:
    """``Q = exp(skew_embed(p)) @ blockdiag(mu, eta)``; ``eta`` is ``[[1]]`` for SE."""

    p: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    iterations: int = 0
    objective: float = 0.0

    def k(self) -> np.ndarray:
        d, l = self.mu.shape[0], self.eta.shape[0]
        K = np.zeros((d + l, d + l))
        K[:d, :d] = self.mu
        K[d:, d:] = self.eta
        return K


def _blockdiag(mus: np.ndarray, etas: np.ndarray) -> np.ndarray:
    d, l = mus.shape[-1], etas.shape[-1]
    K = np.zeros(mus.shape[:-2] + (d + l, d + l))
    K[..., :d, :d] = mus
    K[..., d:, d:] = etas
    return K


# --------------------------------------------------------------------------
# Group contraction psi
# --------------------------------------------------------------------------


def psi_se_arrays(mus: np.ndarray, bs: np.ndarray, lam: float) -> np.ndarray:
    """``exp(b/lam) blockdiag(mu, 1)`` for stacks ``(N, d, d)``, ``(N, d)``."""
    mus = np.asarray(mus, dtype=float)
    d = mus.shape[-1]
    K = np.zeros(mus.shape[:-2] + (d + 1, d + 1))
    K[..., :d, :d] = mus
    K[..., d, d] = 1.0
    return rodrigues_exp(np.asarray(bs, dtype=float) / lam) @ K


def psi_mmg_arrays(mus: np.ndarray, etas: np.ndarray, Bs: np.ndarray, lam: float) -> np.ndarray:
    P = mat_exp(skew_embed_batch(np.asarray(Bs, dtype=float) / lam))
    return P @ _blockdiag(np.asarray(mus, dtype=float), np.asarray(etas, dtype=float))


def psi(g: Union[RigidMotion, MMGElement], lam: float) -> CompactImage:
    if lam < 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")
    if isinstance(g, RigidMotion):
        return CompactImage(psi_se_arrays(g.mu, g.b, lam), lam, "SE", g.d, 1)
    if isinstance(g, MMGElement):
        return CompactImage(psi_mmg_arrays(g.mu, g.eta, g.B, lam), lam, "MMG", g.d, g.l)
    raise TypeError(f"psi is defined on RigidMotion or MMGElement, got {type(g).__name__}")


# --------------------------------------------------------------------------
# Cartan decompositions
# --------------------------------------------------------------------------


def decompose_so_arrays(Qs: np.ndarray, theta_tol: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form Cartan decomposition of a stack of SO(d+1) matrices.

    Returns ``(bs, mus)`` with ``Q = exp(skew_embed(b)) blockdiag(mu, 1)``.
    The last column of ``exp(skew_embed(b))`` is ``(sin t * b/t, cos t)``, so
    ``t = atan2(|Q[:d, d]|, Q[d, d])`` and ``b`` is a rescaling of ``Q[:d, d]``.
    """
    Qs = np.asarray(Qs, dtype=float)
    d = Qs.shape[-1] - 1
    col = Qs[..., :d, d]
    sin_t = np.linalg.norm(col, axis=-1)
    # atan2 keeps full precision near 0, where arccos of the corner does not
    theta = np.arctan2(sin_t, Qs[..., d, d])
    if np.any(np.pi - theta < 1e-9):
        raise BoundaryOfInjectivity("theta = pi: no unique Cartan decomposition")
    small = theta < theta_tol
    scale = np.where(small, 1.0, theta / np.where(small, 1.0, sin_t))
    bs = scale[..., None] * col
    P = rodrigues_exp(bs)
    R = np.swapaxes(P, -1, -2) @ Qs
    mus = project_to_rotation(R[..., :d, :d], special=True)
    return bs, mus


def cartan_decompose_so(Q: np.ndarray) -> CartanFactors:
    """Cartan decomposition of a special orthogonal matrix of order d+1."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {Q.shape}")
    b, mu = decompose_so_arrays(Q)
    return CartanFactors(b, mu, np.ones((1, 1)))


def default_masks(d: int, l: int) -> Tuple[np.ndarray, np.ndarray]:  # noqa: E741
    """Row/column selectors picking the upper-right ``d x l`` block."""
    U1 = np.hstack([np.eye(d), np.zeros((d, l))])
    U2 = np.vstack([np.zeros((d, l)), np.eye(l)])
    return U1, U2


def decompose_opt_arrays(Qs: np.ndarray, d: int, l: int, P0: Optional[np.ndarray] = None,  # noqa: E741
                         masks: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                         tol: float = 1e-20, max_iter: int = 200,
                         fail_above: float = 1e-10):
    """Batched optimisation-based Cartan decomposition in O(d+l).

    Minimises ``|U1 exp(-S(B)) Q U2|_F^2`` over ``B`` by gradient descent
    with Armijo backtracking, all stack members in lock step (converged ones
    are frozen). The gradient uses the adjoint of the Fréchet derivative:
    ``d/dS <G, exp(-S)> = -L(S, G)``.

    Returns ``(Bs, mus, etas, iterations, objectives)``.
    """
    Qs = np.asarray(Qs, dtype=float)
    single = Qs.ndim == 2
    if single:
        Qs = Qs[None]
    N, n = Qs.shape[0], Qs.shape[-1]
    if n != d + l:
        raise DimensionMismatch(f"Q has order {n}, expected {d + l}")
    U1, U2 = masks if masks is not None else default_masks(d, l)
    B = np.zeros((N, d, l)) if P0 is None else np.array(P0, dtype=float).reshape(N, d, l)

    def objective(Bs, Qsub):
        X = U1 @ mat_exp(-skew_embed_batch(Bs)) @ Qsub @ U2
        return np.sum(X ** 2, axis=(-2, -1)), X

    def gradient(Bs, Qsub, X):
        G = U1.T @ X @ U2.T @ np.swapaxes(Qsub, -1, -2)
        Z = frechet_exp(skew_embed_batch(Bs), G)
        return -2.0 * (Z[..., :d, d:] - np.swapaxes(Z[..., d:, :d], -1, -2))

    f, X = objective(B, Qs)
    iters = np.zeros(N, dtype=int)
    for _ in range(max_iter):
        act = np.flatnonzero(f > tol)
        if act.size == 0:
            break
        Ba, Qa, fa = B[act], Qs[act], f[act]
        g = gradient(Ba, Qa, X[act])
        gg = np.sum(g ** 2, axis=(-2, -1))
        t = np.full(act.size, 0.5)
        new_B, new_f, new_X = Ba.copy(), fa.copy(), X[act].copy()
        pending = np.ones(act.size, dtype=bool)
        for _ in range(40):
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            trial = Ba[idx] - t[idx, None, None] * g[idx]
            ft, Xt = objective(trial, Qa[idx])
            ok = ft <= fa[idx] - 1e-4 * t[idx] * gg[idx]
            acc = idx[ok]
            new_B[acc], new_f[acc], new_X[acc] = trial[ok], ft[ok], Xt[ok]
            pending[acc] = False
            t[idx[~ok]] *= 0.5
        stalled = pending  # no descent possible: at the floating-point floor
        B[act], f[act], X[act] = new_B, new_f, new_X
        iters[act[~stalled]] += 1
        if np.all(stalled):
            break
        f[act[stalled]] = np.minimum(f[act[stalled]], tol)
    if np.any(f > fail_above):
        raise NoConvergence(
            f"Cartan decomposition objective {f.max():.3e} after {max_iter} iterations; lambda too small?"
        )
    K = mat_exp(-skew_embed_batch(B)) @ Qs
    mus = project_to_rotation(K[..., :d, :d], special=False)
    etas = project_to_rotation(K[..., d:, d:], special=False)
    f_final, _ = objective(B, Qs)
    if single:
        return B[0], mus[0], etas[0], int(iters[0]), float(f_final[0])
    return B, mus, etas, iters, f_final


def cartan_decompose_opt(Q: np.ndarray, d: int, l: int,  # noqa: E741
                         masks: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                         p0: Optional[np.ndarray] = None, tol: float = 1e-20,
                         max_iter: int = 200) -> CartanFactors:
    """Cartan decomposition ``Q = exp(S(B)) blockdiag(mu, eta)`` by optimisation.

    Starts from ``B = 0`` unless ``p0`` is given. Raises :class:`NoConvergence`
    if the masked objective is still above 1e-10 after ``max_iter`` steps.
    """
    B, mu, eta, it, obj = decompose_opt_arrays(Q, d, l, P0=p0, masks=masks, tol=tol,
                                               max_iter=max_iter)
    return CartanFactors(B, mu, eta, it, obj)


def psi_inverse(c: CompactImage) -> Union[RigidMotion, MMGElement]:
    if c.kind == "SE":
        b, mu = decompose_so_arrays(c.Q)
        return RigidMotion(mu, c.lam * b)
    f = cartan_decompose_opt(c.Q, c.d, c.l)
    return MMGElement(f.mu, f.eta, c.lam * f.p)


# --------------------------------------------------------------------------
# Polar-decomposition projection phi (SE only)
# --------------------------------------------------------------------------


def phi_se_arrays(mus: np.ndarray, bs: np.ndarray, lam: float) -> np.ndarray:
    mus = np.asarray(mus, dtype=float)
    bs = np.asarray(bs, dtype=float)
    d = mus.shape[-1]
    nb = np.linalg.norm(bs, axis=-1)
    tau = 1.0 / np.sqrt(4.0 + (nb / lam) ** 2)
    bhat = bs / np.where(nb > 0, nb, 1.0)[..., None]
    X = np.eye(d) + (2 * tau - 1)[..., None, None] * (bhat[..., :, None] * bhat[..., None, :])
    out = np.zeros(mus.shape[:-2] + (d + 1, d + 1))
    out[..., :d, :d] = X @ mus
    out[..., :d, d] = (tau / lam)[..., None] * bs
    out[..., d, :d] = -(tau / lam)[..., None] * np.einsum("...i,...ij->...j", bs, mus)
    out[..., d, d] = 2 * tau
    return out


def phi(g: RigidMotion, lam: float) -> CompactImage:
    """Orthogonal polar factor of ``[[mu, b/lam], [0, 1]]`` in closed form."""
    if not isinstance(g, RigidMotion):
        raise TypeError("phi is only defined on SE(d)")
    if lam < 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")
    return CompactImage(phi_se_arrays(g.mu, g.b, lam), lam, "SE", g.d, 1)


def phi_inverse_arrays(Qs: np.ndarray, lam: float, check_tol: float = 1e-6):
    Qs = np.asarray(Qs, dtype=float)
    d = Qs.shape[-1] - 1
    D = Qs[..., d, d]
    if np.any(D <= 0) or np.any(D > 1 + 1e-12):
        raise NotInImage("bottom-right entry must lie in (0, 1]")
    tau = D / 2
    bs = (lam / tau)[..., None] * Qs[..., :d, d]
    nb = np.linalg.norm(bs, axis=-1)
    if np.any(np.abs(1.0 / np.sqrt(4.0 + (nb / lam) ** 2) - tau) > check_tol):
        raise NotInImage("last column inconsistent with a polar factor")
    bhat = bs / np.where(nb > 0, nb, 1.0)[..., None]
    c = 2 * tau - 1
    Xinv = np.eye(d) - (c / (1 + c))[..., None, None] * (bhat[..., :, None] * bhat[..., None, :])
    mus = Xinv @ Qs[..., :d, :d]
    ortho = np.linalg.norm(np.swapaxes(mus, -1, -2) @ mus - np.eye(d), axis=(-2, -1))
    row = -(tau / lam)[..., None] * np.einsum("...i,...ij->...j", bs, mus)
    if np.any(ortho > check_tol) or np.any(np.abs(row - Qs[..., d, :d]) > check_tol):
        raise NotInImage("rotation block inconsistent with a polar factor")
    return bs, project_to_rotation(mus, special=True)


def phi_inverse(c: CompactImage) -> RigidMotion:
    if c.kind != "SE":
        raise NotInImage("phi_inverse expects an image of SE(d)")
    b, mu = phi_inverse_arrays(c.Q, c.lam)
    return RigidMotion(mu, b)


# --------------------------------------------------------------------------
# Probes
# --------------------------------------------------------------------------


def _map(kind: str):
    if kind == "psi":
        return psi
    if kind == "phi":
        return phi
    raise ValueError(f"unknown map {kind!r}")


def homomorphism_residual(g1, g2, lam: float, map_kind: str = "psi") -> float:
    """``|F(g1 g2) - F(g1) F(g2)|_F`` for ``F`` = psi or phi."""
    F = _map(map_kind)
    if map_kind == "psi":
        v1 = np.linalg.norm(g1.b if isinstance(g1, RigidMotion) else g1.B)
        v2 = np.linalg.norm(g2.b if isinstance(g2, RigidMotion) else g2.B)
        if v1 + v2 > ZASSENHAUS_RADIUS * lam:
            raise RadiusViolated(
                f"|v1| + |v2| = {v1 + v2:.4g} exceeds {ZASSENHAUS_RADIUS} * lambda = {ZASSENHAUS_RADIUS * lam:.4g}"
            )
    lhs = F(compose(g1, g2), lam).Q
    rhs = F(g1, lam).Q @ F(g2, lam).Q
    return float(np.linalg.norm(lhs - rhs))
