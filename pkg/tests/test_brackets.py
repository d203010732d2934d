import numpy as np
import pytest
import sympy as sp

from nonholo import brackets as B
from nonholo import diffcore as dc
from nonholo import models
from nonholo.diffcore import real
from nonholo.geometry import Model, annihilator, split, structure_functions
from nonholo.projector import project_to_M

import oracles
from oracles import central_jacobian


@pytest.fixture(scope="module")
def particle():
    return models.particle()


@pytest.fixture(scope="module")
def ball():
    return models.rolling_ball()


def as_float(v):
    return float(real(v))


def test_canonical_examples():
    x = np.array([0.3, -0.2, 1.1, 0.5])
    q1 = lambda s: s[0]
    p1 = lambda s: s[2]
    assert B.canonical_bracket(q1, p1, x) == 1.0
    assert B.canonical_bracket(p1, q1, x) == -1.0
    assert B.canonical_bracket(q1, lambda s: s[1], x) == 0.0
    H = lambda s: 0.5 * (s[2] ** 2 + s[3] ** 2)
    assert np.allclose(B.hamiltonian_vector_field(H, x).astype(float), [1.1, 0.5, 0, 0])


def test_symplectic_matrix_pairs_like_bracket():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4)
    F = lambda s: s[0] * s[3] + dc.sin(s[1])
    G = lambda s: s[2] ** 2 * s[0]
    XF = B.hamiltonian_vector_field(F, x).astype(float)
    XG = B.hamiltonian_vector_field(G, x).astype(float)
    assert XF @ B.symplectic_matrix(2) @ XG == pytest.approx(as_float(B.canonical_bracket(F, G, x)), abs=1e-14)


def test_particle_eden_table_matches_symbolic_oracle(particle, rng):
    table = oracles.particle_eden_table()
    obs = B.coordinate_observables(particle)
    labels = [o.label for o in obs]
    assert labels == ["x", "y", "z", "pi1", "pi2"]
    for _ in range(5):
        x = models.sample_on_M(particle, rng)
        subs = dict(zip(oracles.Q + oracles.P, x))
        for i, a in enumerate(obs):
            for j, b in enumerate(obs):
                ref = float(table[(labels[i], labels[j])].subs(subs))
                assert as_float(B.eden_bracket(particle, a, b, x)) == pytest.approx(ref, abs=1e-12)


def test_particle_algebroid_relations(particle, rng):
    x_obs, _, z_obs, _, pi2 = B.coordinate_observables(particle)
    for _ in range(10):
        x = models.sample_on_M(particle, rng)
        assert as_float(B.dstar_bracket_on_M(particle, x_obs, pi2, x)) == pytest.approx(1.0, abs=1e-13)
        assert as_float(B.dstar_bracket_on_M(particle, z_obs, pi2, x)) == pytest.approx(x[1], abs=1e-13)


@pytest.mark.parametrize("name", ["particle", "ball"])
def test_frame_momentum_brackets_follow_structure_functions(name, rng):
    m = models.build(name)
    for _ in range(5):
        x = models.sample_on_M(m, rng)
        q, p = split(x, m.n)
        pi = p @ m.d_frame(q).astype(float)
        C = structure_functions(m, q).C.astype(float)
        for a in range(m.k):
            for b in range(m.k):
                ref = -C[: m.k, a, b] @ pi
                fa, fb = B.frame_momentum(m, a), B.frame_momentum(m, b)
                assert as_float(B.eden_bracket(m, fa, fb, x)) == pytest.approx(ref, abs=1e-11)


def test_algebroid_local_formula_matches_definition(ball, rng):
    phi = lambda q, y: dc.sin(q[2]) * y[0] + q[0] * y[2] ** 2
    psi = lambda q, y: y[1] * y[2] + dc.cos(q[3]) * q[4]
    for _ in range(5):
        q = models.sample_configuration(ball, rng)
        y = rng.standard_normal(3)
        a = as_float(B.algebroid_bracket(ball, phi, psi, q, y))
        b = as_float(B.algebroid_bracket_local(ball, phi, psi, q, y))
        assert a == pytest.approx(b, abs=1e-11)


def test_from_ambient_agrees_with_pullback_on_M(particle, rng):
    F = lambda s: s[3] * s[2] + s[5] ** 2
    f = B.MObservable.from_ambient(particle, F)
    for _ in range(5):
        x = rng.standard_normal(6)
        q, p = split(x, 3)
        pi = p @ particle.d_frame(q).astype(float)
        ref = F(np.asarray(project_to_M(particle, x), dtype=float))
        assert as_float(f.eval_on_M(q, pi)) == pytest.approx(ref, abs=1e-12)


def test_observable_arithmetic(particle):
    x_obs, y_obs = B.coordinate(particle, 0), B.coordinate(particle, 1)
    q, pi = np.array([2.0, 3.0, 0.0]), np.array([1.0, -1.0])
    assert (x_obs + y_obs).eval_on_M(q, pi) == 5.0
    assert (x_obs - 1.0).eval_on_M(q, pi) == 1.0
    assert (2.0 * y_obs).eval_on_M(q, pi) == 6.0
    assert (x_obs * y_obs).label == "(x*y)"
    assert B.constant(particle, 4.0)(np.zeros(6)) == 4.0


def test_bracket_rejects_off_M_and_unknown_kind(particle):
    x = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 0.0])
    f, g = B.coordinate(particle, 0), B.frame_momentum(particle, 1)
    for kind in B.BRACKET_KINDS:
        with pytest.raises(B.OffManifoldError):
            B.bracket(particle, kind, f, g, x)
    with pytest.raises(ValueError, match="unknown bracket"):
        B.bracket(particle, "Dirac", f, g, np.array(project_to_M(particle, x), dtype=float))


# ---------------------------------------------------------------------------
# Symplectic projection


def nullspace_oracle(model, x):
    q, p = split(np.asarray(x, dtype=float), model.n)
    N = np.asarray(B.constraint_normals(model, q), dtype=float)
    K = central_jacobian(lambda s: p @ np.asarray(B.constraint_normals(model, s), dtype=float), q)
    mu = np.asarray(annihilator(model, q), dtype=float)
    return oracles.tdm_nullspace(K, N.T, mu)


@pytest.mark.parametrize("name", ["particle", "ball"])
def test_tdm_basis_spans_oracle_nullspace(name, rng):
    m = models.build(name)
    for _ in range(5):
        x = models.sample_on_M(m, rng)
        Bx = np.asarray(B.tdm_basis(m, x), dtype=float)
        ref = nullspace_oracle(m, x)
        assert ref.shape[1] == 2 * m.k
        assert np.linalg.matrix_rank(Bx) == 2 * m.k
        # projecting B onto the oracle subspace leaves it unchanged
        assert np.max(np.abs(ref @ (ref.T @ Bx) - Bx)) <= 1e-7


@pytest.mark.parametrize("name", ["particle", "ball"])
def test_split_is_symplectic_projection(name, rng):
    m = models.build(name)
    Om = B.symplectic_matrix(m.n)
    for _ in range(5):
        x = models.sample_on_M(m, rng)
        s = B.symplectic_split(m, x)
        P, Bx = s.proj_P.astype(float), s.basis_TDM.astype(float)
        assert np.max(np.abs(P @ P - P)) <= 1e-10
        assert np.max(np.abs(P @ Bx - Bx)) <= 1e-10
        assert np.max(np.abs(Bx.T @ Om @ s.proj_Q.astype(float))) <= 1e-10
        assert np.linalg.matrix_rank(P, tol=1e-8) == 2 * m.k


def test_unconstrained_limit_is_canonical(rng):
    plane = Model("plane", ("a", "b"), 2, lambda q: np.eye(2), lambda q: 0.0, lambda q: np.eye(2), box={"a": (-1, 1), "b": (-1, 1)})
    x = rng.standard_normal(4)
    assert np.allclose(B.symplectic_split(plane, x).proj_P.astype(float), np.eye(4))
    f = B.MObservable.from_ambient(plane, lambda s: s[0] * s[3])
    g = B.MObservable.from_ambient(plane, lambda s: s[1] ** 2 + s[2])
    ref = as_float(B.canonical_bracket(f.ambient, g.ambient, x))
    for kind in B.BRACKET_KINDS:
        assert as_float(B.bracket(plane, kind, f, g, x)) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("name", ["particle", "ball"])
def test_nh_bracket_independent_of_extension(name, rng):
    m = models.build(name)
    n = m.n
    f = B.frame_momentum(m, 0) * B.coordinate(m, 1)
    g = B.frame_momentum(m, 1) + B.coordinate(m, 0) * B.coordinate(m, 0)

    def perturbed(obs, w):
        def F(s):
            q, p = s[:n], s[n:]
            psi = p @ B.constraint_normals(m, q)
            return obs.ambient(s) + dc.sin(q[0] * w) * psi[0] + w * psi[-1] ** 2
        return F

    for _ in range(3):
        x = models.sample_on_M(m, rng)
        raw = as_float(B.nonholonomic_bracket(m, f, g, x))
        via_gamma = as_float(B.nonholonomic_bracket(m, f, g, x, extension="gamma"))
        pert = as_float(B.nonholonomic_bracket(m, f, g, x, extension=(perturbed(f, 0.7), perturbed(g, -1.3))))
        assert via_gamma == pytest.approx(raw, abs=1e-10)
        assert pert == pytest.approx(raw, abs=1e-10)


def test_bracket_table_kinds_agree(ball, rng):
    x = models.sample_on_M(ball, rng)
    labels, tables, disc = B.bracket_table(ball, x)
    assert labels == ["x", "y", "theta", "phi", "psi", "pi1", "pi2", "pi3"]
    assert disc <= 1e-9
    assert np.allclose(tables["E"], -tables["E"].T)


# ---------------------------------------------------------------------------
# Jacobiator


def test_jacobiator_with_constant_vanishes(particle, rng):
    x = models.sample_on_M(particle, rng)
    c = B.constant(particle, 2.5)
    f, g = B.frame_momentum(particle, 0), B.frame_momentum(particle, 1)
    for kind in B.BRACKET_KINDS:
        assert abs(as_float(B.jacobiator(particle, c, f, g, x, kind))) <= 1e-12


def test_particle_jacobiator_matches_symbolic_oracle(particle):
    expr = sp.lambdify(oracles.Y, oracles.particle_jacobiator_pi1_pi2_z())
    pi1, pi2, z = B.frame_momentum(particle, 0), B.frame_momentum(particle, 1), B.coordinate(particle, 2)
    for y in (-1.5, 0.0, 0.4, 2.0):
        x = np.asarray(project_to_M(particle, np.array([0.1, y, 0.2, 0.3, -0.4, 0.9])), dtype=float)
        for kind in B.BRACKET_KINDS:
            assert as_float(B.jacobiator(particle, pi1, pi2, z, x, kind)) == pytest.approx(float(expr(y)), abs=1e-9)
