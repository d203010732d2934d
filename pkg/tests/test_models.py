import itertools

import numpy as np
import pytest

from nonholo import dynamics
from nonholo import geometry as G
from nonholo import models


def test_ball_coframe_matches_closed_form(rng):
    for params in ({"m": 1.0, "I": 0.4, "r": 1.0}, {"m": 1.5, "I": 0.2, "r": 0.8}):
        m = models.build("ball", params)
        for _ in range(20):
            q = models.sample_configuration(m, rng)
            assert np.max(np.abs(G.coframe_at(m, q) - models.ball_coframe(m.params, q))) <= 1e-11


def test_right_invariant_fields_dual_to_forms(rng):
    m = models.rolling_ball()
    for _ in range(20):
        q = models.sample_configuration(m, rng)
        rho = models.right_invariant_forms(q).astype(float)
        X = models.right_invariant_fields(q).astype(float)
        assert np.allclose(rho @ X, np.eye(3), atol=1e-12)


def test_right_invariant_brackets(rng):
    m = models.rolling_ball()
    eps = np.zeros((3, 3, 3))
    for i, j, k in itertools.permutations(range(3)):
        eps[i, j, k] = np.linalg.det(np.eye(3)[[i, j, k]])
    for _ in range(50):
        q = models.sample_configuration(m, rng)
        X = models.right_invariant_fields(q).astype(float)
        for i, j in itertools.combinations(range(3), 2):
            br = G.lie_bracket(
                lambda s, i=i: models.right_invariant_fields(s)[:, i],
                lambda s, j=j: models.right_invariant_fields(s)[:, j],
                q,
            )
            assert np.allclose(np.asarray(br, dtype=float), -X @ eps[i, j], atol=1e-10)


def test_ball_constrained_hamiltonian_matches_legendre(rng):
    m = models.rolling_ball()
    for _ in range(20):
        x = models.sample_on_M(m, rng)
        q = x[:5]
        pi = x[5:] @ m.d_frame(q).astype(float)
        assert dynamics.hamiltonian(m, x) == pytest.approx(
            models.ball_constrained_hamiltonian(m.params, *pi), abs=1e-12
        )


def test_particle_eden_matrix_helper():
    assert np.allclose(models.particle_eden_matrix(1.0), [[0.5, 0, 0.5], [0, 1, 0], [0.5, 0, 0.5]])


def test_ball_default_inertia():
    assert models.rolling_ball(m=2.0, r=0.5).params["I"] == pytest.approx(0.2)


@pytest.mark.parametrize("bad", [{"m": 0.0}, {"I": -1.0}, {"r": 0.0}])
def test_ball_parameter_validation(bad):
    with pytest.raises(ValueError):
        models.build("ball", bad)


def test_registry_errors():
    with pytest.raises(KeyError, match="unknown model"):
        models.build("unicycle")
    with pytest.raises(KeyError, match="no parameter"):
        models.build("particle", {"mass": 1.0})


def test_particle_params_reach_potential():
    m = models.build("particle", {"kx": 2.0})
    assert m.potential(np.array([1.0, 5.0, 5.0])) == pytest.approx(1.0)


def test_load_params(tmp_path):
    f = tmp_path / "ball.cfg"
    f.write_text("# rolling ball\nm = 2.0\nI=0.5  # inertia\n\n")
    assert models.load_params(f) == {"m": 2.0, "I": 0.5}
    f.write_text("m 2\n")
    with pytest.raises(ValueError, match=":1:"):
        models.load_params(f)
    f.write_text("m = heavy\n")
    with pytest.raises(ValueError, match="not a number"):
        models.load_params(f)


def test_hj_solution_requires_energy():
    with pytest.raises(ValueError):
        models.particle_hj_solution(mu=2.0, energy=0.5)


@pytest.mark.parametrize("name", ["particle", "ball", "integrable"])
def test_samples_lie_on_M(name, rng):
    m = models.build(name)
    for _ in range(10):
        assert dynamics.constraint_residual(m, models.sample_on_M(m, rng)) <= 1e-12
