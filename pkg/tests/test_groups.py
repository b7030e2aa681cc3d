import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from cartan_sync.errors import AngleAtPi, DimensionMismatch, RankDeficient
from cartan_sync.groups import (MMGElement, RigidMotion, check_rotation, compose, frechet_exp,
                                hybrid_distance, inverse, mat_exp, orth_log, project_to_rotation,
                                rodrigues_exp, se_log, skew_embed)

from _util import rand_mmg, rand_rot, rand_se, seeds, series_exp


# skew_embed

def test_skew_embed_zero():
    assert np.array_equal(skew_embed(np.zeros(3)), np.zeros((4, 4)))


def test_skew_embed_basis_vector():
    expected = np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], dtype=float)
    assert np.array_equal(skew_embed(np.array([1.0, 0.0])), expected)


def test_skew_embed_matrix_block():
    S = skew_embed(np.array([[1.0, 2.0]]))
    assert S.shape == (3, 3)
    assert np.array_equal(S[0], [0, 1, 2])
    assert np.array_equal(S[:, 0], [0, -1, -2])


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_skew_embed_is_exactly_skew(seed, d, l):
    B = np.random.default_rng(seed).standard_normal((d, l))
    S = skew_embed(B)
    assert np.array_equal(S + S.T, np.zeros_like(S))


# exponentials

def test_rodrigues_zero_is_identity():
    assert np.array_equal(rodrigues_exp(np.zeros(3)), np.eye(4))


def test_rodrigues_planar_quarter_turn():
    R = rodrigues_exp(np.array([np.pi / 2]))
    oracle = series_exp(skew_embed(np.array([np.pi / 2])))
    assert np.allclose(R, [[0, 1], [-1, 0]], atol=1e-15)
    assert np.allclose(R, oracle, atol=1e-13)


def test_rodrigues_unit_vector_matches_series():
    b = np.random.default_rng(3).standard_normal(3)
    b /= np.linalg.norm(b)
    assert np.allclose(rodrigues_exp(b), series_exp(skew_embed(b)), atol=1e-12)


def test_mat_exp_examples():
    assert np.array_equal(mat_exp(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(mat_exp(np.diag([1.0, 2.0])), np.diag([np.e, np.e ** 2]), rtol=1e-14)
    b = np.array([1.0, 0.5, 0.2])
    assert np.allclose(mat_exp(skew_embed(b)), rodrigues_exp(b), atol=1e-12)


@settings(max_examples=200)
@given(seeds, st.integers(1, 6), st.floats(1e-3, np.pi - 1e-3))
def test_rodrigues_matches_mat_exp(seed, d, theta):
    b = np.random.default_rng(seed).standard_normal(d)
    b *= theta / np.linalg.norm(b)
    assert np.allclose(rodrigues_exp(b), mat_exp(skew_embed(b)), atol=1e-11)


@given(seeds, st.integers(1, 12), st.floats(1e-3, 30))
def test_mat_exp_matches_scipy(seed, n, scale):
    A = np.random.default_rng(seed).standard_normal((n, n))
    A *= scale / np.linalg.norm(A, 1)
    ref = scipy.linalg.expm(A)
    assert np.linalg.norm(mat_exp(A) - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_mat_exp_batched_matches_loop():
    A = np.random.default_rng(0).standard_normal((5, 4, 4)) * [[[0.01]], [[0.3]], [[1]], [[3]], [[10]]]
    batch = mat_exp(A)
    for k in range(5):
        ref = scipy.linalg.expm(A[k])
        assert np.linalg.norm(batch[k] - ref) <= 1e-11 * np.linalg.norm(ref)
        assert np.linalg.norm(batch[k] - mat_exp(A[k])) <= 1e-11 * np.linalg.norm(ref)


def test_frechet_matches_finite_difference():
    rng = np.random.default_rng(1)
    A, E = rng.standard_normal((2, 5, 5))
    h = 1e-6
    fd = (scipy.linalg.expm(A + h * E) - scipy.linalg.expm(A - h * E)) / (2 * h)
    assert np.allclose(frechet_exp(A, E), fd, atol=1e-6)


# logarithms

def test_orth_log_examples():
    assert np.array_equal(orth_log(np.eye(3)), np.zeros((3, 3)))
    c, s = np.cos(0.7), np.sin(0.7)
    L = orth_log(np.array([[c, -s], [s, c]]))
    assert np.allclose(L, [[0, -0.7], [0.7, 0]], atol=1e-14)


def test_orth_log_at_pi_raises():
    with pytest.raises(AngleAtPi):
        orth_log(np.diag([-1.0, -1.0, 1.0]))


@settings(max_examples=200)
@given(seeds, st.integers(2, 7), st.floats(0.0, np.pi - 0.1))
def test_log_exp_roundtrip(seed, d, max_angle):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    S = A - A.T
    top = np.linalg.norm(S, 2)
    if top > 0:
        S *= max_angle / top
    R = mat_exp(S)
    assert np.allclose(mat_exp(orth_log(R)), R, atol=1e-9)
    assert np.allclose(orth_log(R), S, atol=1e-9)


def test_se_log_examples():
    assert np.allclose(se_log(RigidMotion.identity(3)), np.zeros((4, 4)))
    b = np.array([1.0, -2.0, 0.5])
    L = se_log(RigidMotion(np.eye(3), b))
    expected = np.zeros((4, 4))
    expected[:3, 3] = b
    assert np.allclose(L, expected, atol=1e-15)


@given(seeds)
def test_se_log_roundtrip(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((3, 3))
    g = RigidMotion(mat_exp(0.5 * (A - A.T)), rng.standard_normal(3))
    assert np.allclose(mat_exp(se_log(g)), g.matrix(), atol=1e-9)
    assert np.allclose(se_log(g), scipy.linalg.logm(g.matrix()).real, atol=1e-9)


# projection

def test_project_examples():
    R = rand_rot(np.random.default_rng(0), 4)
    assert np.allclose(project_to_rotation(R), R, atol=1e-14)
    assert np.allclose(project_to_rotation(np.diag([2.0, 1.0])), np.eye(2))
    with pytest.raises(RankDeficient):
        project_to_rotation(np.diag([1.0, 0.0]))


def test_project_special_flips_determinant():
    R = project_to_rotation(np.diag([1.0, 2.0, -3.0]), special=True)
    assert np.linalg.det(R) > 0
    Q = project_to_rotation(np.diag([1.0, 2.0, -3.0]), special=False)
    assert np.allclose(Q, np.diag([1.0, 1.0, -1.0]))


@given(seeds, st.integers(2, 5), st.floats(1e-8, 1e-3))
def test_project_perturbation(seed, d, eps):
    rng = np.random.default_rng(seed)
    R = rand_rot(rng, d)
    E = rng.standard_normal((d, d))
    P = project_to_rotation(R + eps * E)
    U, _, Vt = np.linalg.svd(R + eps * E)
    oracle = U @ np.diag([1] * (d - 1) + [np.sign(np.linalg.det(U @ Vt))]) @ Vt
    assert np.allclose(P, oracle, atol=1e-12)
    assert np.linalg.norm(P - R) <= 3 * eps * np.linalg.norm(E)


@settings(max_examples=100)
@given(seeds, st.integers(2, 5))
def test_projection_optimality(seed, d):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    P = project_to_rotation(A)
    best = np.linalg.norm(A - P)
    for _ in range(50):
        assert best <= np.linalg.norm(A - rand_rot(rng, d)) + 1e-12


# group law

def test_compose_examples():
    g = rand_se(np.random.default_rng(0))
    h = compose(g, RigidMotion.identity(3))
    assert np.allclose(h.mu, g.mu) and np.allclose(h.b, g.b)
    t = compose(RigidMotion(np.eye(3), [1, 2, 3]), RigidMotion(np.eye(3), [4, 5, 6]))
    assert np.allclose(t.b, [5, 7, 9])


@given(seeds)
def test_mmg_inverse_roundtrip(seed):
    g = rand_mmg(np.random.default_rng(seed))
    e = compose(g, inverse(g))
    assert np.allclose(e.mu, np.eye(4), atol=1e-12)
    assert np.allclose(e.eta, np.eye(3), atol=1e-12)
    assert np.allclose(e.B, 0, atol=1e-12)


@given(seeds, st.sampled_from(["SE", "MMG"]))
def test_group_axioms(seed, kind):
    rng = np.random.default_rng(seed)
    make = (lambda: rand_se(rng)) if kind == "SE" else (lambda: rand_mmg(rng))
    a, b, c = make(), make(), make()
    lhs, rhs = compose(compose(a, b), c), compose(a, compose(b, c))
    assert hybrid_distance(lhs, rhs) <= 1e-12
    ident = RigidMotion.identity(3) if kind == "SE" else MMGElement.identity(4, 3)
    assert hybrid_distance(compose(ident, a), a) <= 1e-12
    assert hybrid_distance(compose(a, ident), a) <= 1e-12
    assert hybrid_distance(compose(inverse(a), a), ident) <= 1e-12


def test_compose_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        compose(RigidMotion.identity(2), RigidMotion.identity(3))
    with pytest.raises(DimensionMismatch):
        compose(RigidMotion.identity(3), MMGElement.identity(3, 1))


def test_se_matches_homogeneous_product():
    rng = np.random.default_rng(5)
    a, b = rand_se(rng), rand_se(rng)
    assert np.allclose(compose(a, b).matrix(), a.matrix() @ b.matrix())


# distance

def test_hybrid_distance_examples():
    g = rand_se(np.random.default_rng(2))
    assert hybrid_distance(g, g) == 0
    b = np.array([3.0, 4.0, 0.0])
    assert hybrid_distance(RigidMotion.identity(3), RigidMotion(np.eye(3), b)) == pytest.approx(5.0)


@given(seeds)
def test_hybrid_distance_metric(seed):
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x, y, z = rand_mmg(rng), rand_mmg(rng), rand_mmg(rng)
        assert hybrid_distance(x, z) <= hybrid_distance(x, y) + hybrid_distance(y, z) + 1e-12
        assert hybrid_distance(x, y) == pytest.approx(hybrid_distance(y, x))


def test_element_validation():
    with pytest.raises(ValueError):
        RigidMotion(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        RigidMotion(np.eye(3), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        MMGElement(np.eye(3), np.eye(2), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        check_rotation(np.eye(3) * 1.01)
    g = RigidMotion(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        g.b[0] = 1.0
