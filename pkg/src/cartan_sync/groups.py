"""Matrix groups used throughout the package.

Two Cartan motion groups are supported:

* ``SE(d) = SO(d) x| R^d`` with elements ``RigidMotion(mu, b)``;
* ``MMG(d, l) = (O(d) x O(l)) x| M(d, l)`` with elements ``MMGElement(mu, eta, B)``.

Compact-group elements (``SO(d)``, ``O(d)``) are plain ``numpy`` arrays that
pass :func:`check_rotation`.

Most array routines accept a leading batch dimension, which is what the
solvers use internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from .errors import AngleAtPi, DimensionMismatch, RankDeficient

ORTHO_TOL = 1e-10
PI_TOL = 1e-8


def check_rotation(R: np.ndarray, special: bool = False, tol: float = ORTHO_TOL) -> np.ndarray:
    """Validate an orthogonal matrix and return it as a read-only float array."""
    R = np.array(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {R.shape}")
    err = np.linalg.norm(R.T @ R - np.eye(R.shape[0]))
    if err > tol:
        raise ValueError(f"matrix is not orthogonal (|R^T R - I|_F = {err:.3e})")
    if special and np.linalg.det(R) <= 0:
        raise ValueError("rotation must have positive determinant")
    R.setflags(write=False)
    return R


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Element ``(mu, b)`` of SE(d); acts as ``x -> mu x + b``."""

    mu: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        mu = check_rotation(self.mu, special=True)
        b = np.array(self.b, dtype=float).reshape(-1)
        if b.shape[0] != mu.shape[0]:
            raise DimensionMismatch(f"translation of length {b.shape[0]} for SO({mu.shape[0]})")
        b.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @classmethod
    def identity(cls, d: int) -> "RigidMotion":
        return cls(np.eye(d), np.zeros(d))

    def matrix(self) -> np.ndarray:
        """Homogeneous ``(d+1) x (d+1)`` representation."""
        d = self.d
        H = np.eye(d + 1)
        H[:d, :d] = self.mu
        H[:d, d] = self.b
        return H

    def __matmul__(self, other):
        return compose(self, other)

    def inv(self) -> "RigidMotion":
        return inverse(self)

    def __repr__(self):
        return f"RigidMotion(mu={self.mu.tolist()}, b={self.b.tolist()})"


@dataclass(frozen=True, eq=False)
class MMGElement:
    """Element ``(mu, eta, B)`` of the matrix motion group MMG(d, l)."""

    mu: np.ndarray
    eta: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        mu = check_rotation(self.mu)
        eta = check_rotation(self.eta)
        B = np.array(self.B, dtype=float)
        if B.shape != (mu.shape[0], eta.shape[0]):
            raise DimensionMismatch(
                f"B has shape {B.shape}, expected {(mu.shape[0], eta.shape[0])}"
            )
        B.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "B", B)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.eta.shape[0]

    @classmethod
    def identity(cls, d: int, l: int) -> "MMGElement":  # noqa: E741
        return cls(np.eye(d), np.eye(l), np.zeros((d, l)))

    def __matmul__(self, other):
        return compose(self, other)

    def inv(self) -> "MMGElement":
        return inverse(self)

    def __repr__(self):
        return f"MMGElement(mu={self.mu.tolist()}, eta={self.eta.tolist()}, B={self.B.tolist()})"


GroupElement = Union[RigidMotion, MMGElement, np.ndarray]


# --------------------------------------------------------------------------
# Lie-algebra pieces
# --------------------------------------------------------------------------


def skew_embed(t: np.ndarray) -> np.ndarray:
    """Embed a motion part into the compact Lie algebra.

    A vector ``b`` of length d becomes ``[[0, b], [-b^T, 0]]`` of order d+1;
    a ``d x l`` matrix ``B`` becomes ``[[0, B], [-B^T, 0]]`` of order d+l.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    elif t.ndim != 2:
        raise DimensionMismatch(f"expected a vector or a matrix, got ndim={t.ndim}")
    d, l = t.shape
    S = np.zeros((d + l, d + l))
    S[:d, d:] = t
    S[d:, :d] = -t.T
    return S


def skew_embed_batch(T: np.ndarray) -> np.ndarray:
    """Batched :func:`skew_embed` for ``(..., d, l)`` inputs."""
    T = np.asarray(T, dtype=float)
    d, l = T.shape[-2:]
    S = np.zeros(T.shape[:-2] + (d + l, d + l))
    S[..., :d, d:] = T
    S[..., d:, :d] = -np.swapaxes(T, -1, -2)
    return S


def rodrigues_exp(b: np.ndarray) -> np.ndarray:
    """Closed-form ``exp(skew_embed(b))`` for SE translations.

    Accepts ``(..., d)`` arrays. The embedded matrix has rank two with
    eigenvalues ``+-i|b|``, so the exponential is
    ``I + sin(t) P + (1 - cos(t)) P^2`` with ``t = |b|`` and ``P = S/t``.
    """
    b = np.asarray(b, dtype=float)
    d = b.shape[-1]
    theta = np.linalg.norm(b, axis=-1)
    safe = np.where(theta > 0, theta, 1.0)
    u = b / safe[..., None]
    P = skew_embed_batch(u[..., :, None])
    P2 = P @ P
    s = np.sin(theta)[..., None, None]
    c = (1.0 - np.cos(theta))[..., None, None]
    return np.eye(d + 1) + s * P + c * P2


# Higham (2005) scaling-and-squaring parameters.
_THETA = {3: 1.495585217958292e-2, 5: 2.539398330063230e-1, 7: 9.504178996162932e-1,
          9: 2.097847961257068e0, 13: 5.371920351148152e0}
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
         33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0),
}


def _pade_uv(A: np.ndarray, m: int):
    b = _PADE[m]
    I = np.broadcast_to(np.eye(A.shape[-1]), A.shape)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
        V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
        return U, V
    powers = [I, A2]
    for _ in range(2, m // 2 + 1):
        powers.append(powers[-1] @ A2)
    U = A @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
    V = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return U, V


def mat_exp(A: np.ndarray) -> np.ndarray:
    """Principal matrix exponential by scaling and squaring.

    Uses the diagonal Padé approximants of orders 3..13 with Higham's
    backward-error thresholds. Works on ``(..., n, n)`` stacks; the order and
    number of squarings are chosen from the largest 1-norm in the stack.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[-1] != A.shape[-2]:
        raise DimensionMismatch(f"expected square matrices, got {A.shape}")
    if A.size == 0:
        return A.copy()
    norm1 = float(np.max(np.sum(np.abs(A), axis=-2)))
    for m in (3, 5, 7, 9):
        if norm1 <= _THETA[m]:
            U, V = _pade_uv(A, m)
            return np.linalg.solve(V - U, V + U)
    s = max(0, int(np.ceil(np.log2(norm1 / _THETA[13]))))
    U, V = _pade_uv(A / 2.0 ** s, 13)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def frechet_exp(A: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Fréchet derivative of ``exp`` at ``A`` in direction ``E`` (batched).

    Read off the upper-right block of ``exp([[A, E], [0, A]])``.
    """
    n = A.shape[-1]
    big = np.zeros(A.shape[:-2] + (2 * n, 2 * n))
    big[..., :n, :n] = A
    big[..., n:, n:] = A
    big[..., :n, n:] = E
    return mat_exp(big)[..., :n, n:]


def orth_log(R: np.ndarray, special: bool = True) -> np.ndarray:
    """Principal logarithm of an orthogonal matrix via its real Schur form.

    The Schur form of an orthogonal matrix is block diagonal with 2x2 planar
    rotations and +-1 entries; each block's angle is read with ``atan2``.
    Raises :class:`AngleAtPi` when an eigenvalue sits at -1 (within 1e-8),
    which includes every matrix of determinant -1.
    """
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    if special and np.linalg.det(R) <= 0:
        raise ValueError("expected a special orthogonal matrix")
    T, Z = scipy.linalg.schur(R, output="real")
    L = np.zeros((n, n))
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 1e-300:
            a = 0.5 * (T[i, i] + T[i + 1, i + 1])
            s = 0.5 * (T[i + 1, i] - T[i, i + 1])
            theta = np.arctan2(s, a)
            if np.pi - abs(theta) < PI_TOL:
                raise AngleAtPi("rotation angle at pi; logarithm is not unique")
            L[i + 1, i] = theta
            L[i, i + 1] = -theta
            i += 2
        else:
            if T[i, i] < 0:
                raise AngleAtPi("eigenvalue -1; logarithm is not unique")
            i += 1
    L = Z @ L @ Z.T
    return 0.5 * (L - L.T)


def se_log(g: RigidMotion) -> np.ndarray:
    """Principal logarithm of the homogeneous matrix of ``g``.

    Returns ``[[W, u], [0, 0]]`` with ``W = log(mu)`` and ``u = V^{-1} b``,
    where ``V = sum_k W^k / (k+1)!`` is taken from an augmented exponential.
    """
    d = g.d
    W = orth_log(g.mu, special=True)
    aug = np.zeros((2 * d, 2 * d))
    aug[:d, :d] = W
    aug[:d, d:] = np.eye(d)
    V = mat_exp(aug)[:d, d:]
    out = np.zeros((d + 1, d + 1))
    out[:d, :d] = W
    out[:d, d] = np.linalg.solve(V, g.b)
    return out


def project_to_rotation(A: np.ndarray, special: bool = True) -> np.ndarray:
    """Nearest orthogonal matrix in Frobenius norm (batched over leading axes).

    With ``special`` the determinant is forced positive by flipping the
    weakest singular direction.
    """
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A)
    if np.any(s[..., -1] <= 1e-12 * s[..., 0]):
        raise RankDeficient("matrix is numerically rank deficient")
    if special:
        det = np.linalg.det(U @ Vt)
        U = U.copy()
        U[..., :, -1] *= np.where(det < 0, -1.0, 1.0)[..., None]
    return U @ Vt


# --------------------------------------------------------------------------
# Group laws
# --------------------------------------------------------------------------


def _check_same(g1, g2):
    if type(g1) is not type(g2):
        raise DimensionMismatch(f"cannot combine {type(g1).__name__} with {type(g2).__name__}")
    if isinstance(g1, RigidMotion) and g1.d != g2.d:
        raise DimensionMismatch(f"SE({g1.d}) vs SE({g2.d})")
    if isinstance(g1, MMGElement) and (g1.d, g1.l) != (g2.d, g2.l):
        raise DimensionMismatch(f"MMG({g1.d},{g1.l}) vs MMG({g2.d},{g2.l})")
    if isinstance(g1, np.ndarray) and g1.shape != g2.shape:
        raise DimensionMismatch(f"{g1.shape} vs {g2.shape}")


def compose(g1: GroupElement, g2: GroupElement) -> GroupElement:
    _check_same(g1, g2)
    if isinstance(g1, RigidMotion):
        return RigidMotion(g1.mu @ g2.mu, g1.b + g1.mu @ g2.b)
    if isinstance(g1, MMGElement):
        return MMGElement(g1.mu @ g2.mu, g1.eta @ g2.eta, g1.mu @ g2.B @ g1.eta.T + g1.B)
    return g1 @ g2


def inverse(g: GroupElement) -> GroupElement:
    if isinstance(g, RigidMotion):
        return RigidMotion(g.mu.T, -g.mu.T @ g.b)
    if isinstance(g, MMGElement):
        return MMGElement(g.mu.T, g.eta.T, -g.mu.T @ g.B @ g.eta)
    return np.asarray(g).T


def identity_like(g: GroupElement) -> GroupElement:
    if isinstance(g, RigidMotion):
        return RigidMotion.identity(g.d)
    if isinstance(g, MMGElement):
        return MMGElement.identity(g.d, g.l)
    return np.eye(np.asarray(g).shape[0])


def hybrid_distance(g1: GroupElement, g2: GroupElement) -> float:
    """Root-sum-of-squares of compact-part Frobenius and motion-part distances."""
    _check_same(g1, g2)
    if isinstance(g1, RigidMotion):
        sq = np.sum((g1.mu - g2.mu) ** 2) + np.sum((g1.b - g2.b) ** 2)
    elif isinstance(g1, MMGElement):
        sq = (np.sum((g1.mu - g2.mu) ** 2) + np.sum((g1.eta - g2.eta) ** 2)
              + np.sum((g1.B - g2.B) ** 2))
    else:
        sq = np.sum((np.asarray(g1) - np.asarray(g2)) ** 2)
    return float(np.sqrt(sq))


def motion_part(g: GroupElement) -> np.ndarray:
    """The linear (non-compact) part ``b`` or ``B``; empty for compact elements."""
    if isinstance(g, RigidMotion):
        return g.b
    if isinstance(g, MMGElement):
        return g.B
    return np.zeros(0)
