import numpy as np
import pytest

from nonholo import geometry as G
from nonholo import models
from nonholo.geometry import ChartDegeneracyError, ChartDomainError, MetricError, Model


def particle_with_explicit_complement():
    """The particle with e_3 = d_z - y d_x supplied explicitly."""
    base = models.particle()
    return Model(
        name="particle-e3",
        coord_names=base.coord_names,
        k=2,
        metric=base.metric,
        potential=base.potential,
        d_frame=base.d_frame,
        perp_frame=lambda q: np.array([[-q[1]], [0.0], [1.0]], dtype=object),
        box=base.box,
    )


def test_flat_sharp_identity_metric():
    m = models.particle()
    v = np.array([0.3, -1.0, 2.0])
    assert np.array_equal(G.flat(m, np.zeros(3), v), v)


def test_sharp_flat_roundtrip(rng):
    for name in ("particle", "ball"):
        m = models.build(name)
        for _ in range(20):
            q = models.sample_configuration(m, rng)
            v = rng.standard_normal(m.n)
            assert np.allclose(G.sharp(m, q, G.flat(m, q, v)), v, atol=1e-12)


def test_ball_sharp_matches_direct_solve(rng):
    m = models.rolling_ball()
    q = models.sample_configuration(m, rng)
    mu_a = models.ball_coframe(m.params, q)[0]
    assert np.allclose(G.sharp(m, q, mu_a), np.linalg.solve(m.metric(q).astype(float), mu_a.astype(float)), atol=1e-13)


def test_metric_error_reports_eigenvalue():
    bad = Model("bad", ("a", "b"), 1, lambda q: np.diag([1.0, -2.0]), lambda q: 0.0, lambda q: np.array([[1.0], [0.0]]))
    with pytest.raises(MetricError, match="eigenvalue"):
        G.sharp(bad, np.zeros(2), np.ones(2))


def test_particle_complement_direction(rng):
    m = models.particle()
    for _ in range(20):
        q = models.sample_configuration(m, rng)
        eA = G.orthogonal_complement(m, q)[:, 0]
        ref = np.array([-q[1], 0.0, 1.0])
        assert abs(abs(eA @ ref) - np.linalg.norm(ref)) <= 1e-12  # parallel, unit length
        assert np.allclose(m.d_frame(q).T @ eA, 0.0, atol=1e-14)


def test_integrable_complement_is_dz():
    m = models.integrable_model()
    assert np.allclose(G.orthogonal_complement(m, np.array([0.2, 0.1, -0.4]))[:, 0], [0, 0, 1])


def test_ball_complement_orthogonal(rng):
    m = models.rolling_ball()
    for _ in range(20):
        q = models.sample_configuration(m, rng)
        F = G.full_frame(m, q)
        g = m.metric(q)
        assert np.max(np.abs(F[:, :3].T @ g @ F[:, 3:])) <= 1e-12
        assert np.linalg.matrix_rank(F) == 5
        # the Gram-Schmidt complement spans the same plane as e_alpha, e_beta
        gs = G.orthogonal_complement(m, q)
        assert np.linalg.matrix_rank(np.hstack([F[:, 3:], gs]), tol=1e-9) == 2


def test_particle_structure_functions_explicit_frame(rng):
    m = particle_with_explicit_complement()
    for _ in range(20):
        q = models.sample_configuration(m, rng)
        y = q[1]
        C = G.structure_functions(m, q).C
        assert C[1, 0, 1] == pytest.approx(y / (1 + y * y), abs=1e-13)
        assert C[2, 0, 1] == pytest.approx(1 / (1 + y * y), abs=1e-13)
        assert C[0, 0, 1] == pytest.approx(0.0, abs=1e-13)


def test_structure_functions_antisymmetric_and_decomposition(rng):
    for name in ("particle", "ball"):
        m = models.build(name)
        for _ in range(10):
            sf = G.structure_functions(m, models.sample_configuration(m, rng))
            assert np.max(np.abs(sf.C + np.transpose(sf.C, (0, 2, 1)))) <= 1e-13
            assert sf.residual <= 1e-12


def test_integrable_structure_functions_vanish():
    m = models.integrable_model()
    assert np.max(np.abs(G.structure_functions(m, np.array([0.3, 0.1, 0.2])).C)) == 0.0


def test_ball_structure_functions_give_eden_relations(rng):
    """-C^c_ab pi_c reproduces {f_a, f_b}_E = f_c / r^2 and friends."""
    for params in ({"m": 1.0, "I": 0.4, "r": 1.0}, {"m": 2.0, "I": 0.3, "r": 0.7}):
        m = models.build("ball", params)
        I, mass, r = params["I"], params["m"], params["r"]
        for _ in range(10):
            C = G.structure_functions(m, models.sample_configuration(m, rng)).C
            assert C[2, 0, 1] == pytest.approx(-1 / r**2, abs=1e-12)  # [e_a, e_b] = -e_c / r^2
            assert C[1, 0, 2] == pytest.approx(I / (I + mass * r**2), abs=1e-12)
            assert C[0, 1, 2] == pytest.approx(-I / (I + mass * r**2), abs=1e-12)
            assert C[1, 0, 1] == pytest.approx(0.0, abs=1e-12)


def test_coframe_dual_to_frame(rng):
    for name in ("particle", "ball", "integrable"):
        m = models.build(name)
        for _ in range(100):
            q = models.sample_configuration(m, rng)
            af = G.adapted_frame(m, q)
            assert np.max(np.abs(af.coframe @ af.E_cols - np.eye(m.n))) <= 1e-9
            assert np.allclose(af.gram_D @ af.gram_D_inv, np.eye(m.k), atol=1e-12)


def test_rank_deficient_frame_rejected():
    m = Model(
        "degenerate",
        ("a", "b", "c"),
        2,
        lambda q: np.eye(3),
        lambda q: 0.0,
        lambda q: np.array([[1.0, q[0]], [0.0, 0.0], [0.0, 0.0]], dtype=object),
    )
    with pytest.raises(ChartDegeneracyError):
        G.orthogonal_complement(m, np.array([1.0, 0.0, 0.0]))


def test_domain_guard():
    with pytest.raises(ChartDomainError):
        G.adapted_frame(models.rolling_ball(), np.array([0.0, 0.0, 0.0, 0.1, 0.2]))


def test_model_validation():
    with pytest.raises(ValueError):
        Model("k0", ("a",), 0, lambda q: np.eye(1), lambda q: 0.0, lambda q: np.zeros((1, 0)))
