"""Built-in systems: the nonholonomic particle, the rolling ball, and an
integrable control case, with closed-form reference data for each."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .diffcore import cos, sin, sqrt
from .geometry import Model, split
from .projector import project_to_M


def _obj(rows):
    return np.array(rows, dtype=object)


# ---------------------------------------------------------------------------
# Nonholonomic particle: Q = R^3, constraint zdot = y xdot.


def particle(kx: float = 0.0, ky: float = 0.0, kz: float = 0.0, potential: Callable | None = None) -> Model:
    """Unit-mass particle with velocities tangent to ``span{d_y, d_x + y d_z}``.

    The default potential is ``(kx x^2 + ky y^2 + kz z^2) / 2``; pass
    ``potential`` to use any other scalar function of ``q``.
    """

    def V(q):
        return 0.5 * (kx * q[0] * q[0] + ky * q[1] * q[1] + kz * q[2] * q[2])

    def frame(q):
        return _obj([[0.0, 1.0], [1.0, 0.0], [0.0, q[1]]])

    return Model(
        name="particle",
        coord_names=("x", "y", "z"),
        k=2,
        metric=lambda q: np.eye(3),
        potential=potential or V,
        d_frame=frame,
        params={"kx": kx, "ky": ky, "kz": kz},
        box={"x": (-2.0, 2.0), "y": (-3.0, 3.0), "z": (-2.0, 2.0)},
    )


def particle_eden_matrix(y: float) -> np.ndarray:
    """Closed-form Eden matrix of the particle (equal to its projector)."""
    d = 1.0 + y * y
    return np.array([[1 / d, 0.0, y / d], [0.0, 1.0, 0.0], [y / d, 0.0, y * y / d]])


def particle_hj_solution(mu: float = 0.6, energy: float = 0.5, branch: int = 1):
    """Free-particle HJ solution ``mu/s dx +- sqrt(2E - mu^2) dy + mu y/s dz``,
    ``s = sqrt(1 + y^2)``."""
    if 2 * energy - mu * mu < 0:
        raise ValueError("need 2E >= mu^2")
    c = branch * np.sqrt(2 * energy - mu * mu)

    def lam(q):
        s = sqrt(1 + q[1] * q[1])
        return _obj([mu / s, c, mu * q[1] / s])

    return lam


def particle_perturbed_lambda(q):
    """``(1 + y^2) dy``: takes values in M but solves neither HJ equation."""
    return _obj([0.0, 1 + q[1] * q[1], 0.0])


def particle_x_weighted_lambda(q):
    """``(1 + x^2) dy``: fails the classical conditions yet solves the
    generalized equation (its flow keeps p constant)."""
    return _obj([0.0, 1 + q[0] * q[0], 0.0])


# ---------------------------------------------------------------------------
# Rolling ball: Q = R^2 x SO(3), chart (x, y, theta, phi, psi), z-x-z Euler angles.


def right_invariant_forms(q):
    """Rows rho_1, rho_2, rho_3 (spatial angular velocity components)."""
    th, ph = q[2], q[3]
    return _obj(
        [
            [0.0, 0.0, cos(ph), 0.0, sin(ph) * sin(th)],
            [0.0, 0.0, sin(ph), 0.0, -cos(ph) * sin(th)],
            [0.0, 0.0, 0.0, 1.0, cos(th)],
        ]
    )


def right_invariant_fields(q):
    """Columns X_1, X_2, X_3 dual to :func:`right_invariant_forms`;
    they satisfy ``[X_i, X_j] = -eps_ijk X_k``."""
    th, ph = q[2], q[3]
    s, c = sin(th), cos(th)
    return _obj(
        [
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [cos(ph), sin(ph), 0.0],
            [-sin(ph) * c / s, cos(ph) * c / s, 1.0],
            [sin(ph) / s, -cos(ph) / s, 0.0],
        ]
    )


_UNIT = np.eye(5)


def rolling_ball(m: float = 1.0, I: float | None = None, r: float = 1.0) -> Model:
    """Homogeneous sphere rolling without slipping; ``I`` defaults to ``2/5 m r^2``."""
    if I is None:
        I = 0.4 * m * r * r
    if not (m > 0 and I > 0 and r > 0):
        raise ValueError("rolling ball needs m, I, r > 0")

    def metric(q):
        rho = right_invariant_forms(q)
        G = I * (rho.T @ rho)
        G[0, 0] = G[0, 0] + m
        G[1, 1] = G[1, 1] + m
        return G

    def frame(q):
        X = right_invariant_fields(q)
        ea = _UNIT[:, 0] + X[:, 1] / r
        eb = _UNIT[:, 1] - X[:, 0] / r
        return np.stack([ea, eb, X[:, 2]], axis=1)

    def perp(q):
        X = right_invariant_fields(q)
        e_alpha = I * _UNIT[:, 0] - m * r * X[:, 1]
        e_beta = I * _UNIT[:, 1] + m * r * X[:, 0]
        return np.stack([e_alpha, e_beta], axis=1)

    def frame_momentum(a):
        def f(x):
            q, p = split(x, 5)
            return p @ frame(q)[:, a]

        return f

    return Model(
        name="ball",
        coord_names=("x", "y", "theta", "phi", "psi"),
        k=3,
        metric=metric,
        potential=lambda q: 0.0,
        d_frame=frame,
        perp_frame=perp,
        domain_guard=lambda q: 1e-3 < q[2] < np.pi - 1e-3,
        params={"m": m, "I": I, "r": r},
        first_integrals={"f_a": frame_momentum(0), "f_b": frame_momentum(1), "f_c": frame_momentum(2)},
        box={
            "x": (-2.0, 2.0),
            "y": (-2.0, 2.0),
            "theta": (0.2, np.pi - 0.2),
            "phi": (-np.pi, np.pi),
            "psi": (-np.pi, np.pi),
        },
    )


def ball_constrained_hamiltonian(params, pa, pb, pc):
    m, I, r = params["m"], params["I"], params["r"]
    return r * r * (pa * pa + pb * pb) / (2 * (I + m * r * r)) + pc * pc / (2 * I)


def ball_coframe(params, q):
    """Closed-form ``mu^a, mu^b, mu^c, mu^alpha, mu^beta`` as rows."""
    m, I, r = params["m"], params["I"], params["r"]
    rho = right_invariant_forms(q)
    dx, dy = _UNIT[0], _UNIT[1]
    s = I + m * r * r
    return np.stack(
        [
            r / s * (m * r * dx + I * rho[1]),
            r / s * (m * r * dy - I * rho[0]),
            rho[2],
            (dx - r * rho[1]) / s,
            (dy + r * rho[0]) / s,
        ]
    )


def ball_constant_lambda(params, ca: float = 1.0, cb: float = 1.0, cc: float = 1.0, perturb: float = 0.0):
    """``c_a mu^a + c_b mu^b + c_c mu^c``; ``perturb`` adds ``perturb * x`` to
    ``c_a``, which breaks the HJ equation."""

    def lam(q):
        mu = ball_coframe(params, q)
        return (ca + perturb * q[0]) * mu[0] + cb * mu[1] + cc * mu[2]

    return lam


# ---------------------------------------------------------------------------


def integrable_model() -> Model:
    """Euclidean R^3 with the integrable distribution ``span{d_x, d_y}``."""
    return Model(
        name="integrable",
        coord_names=("x", "y", "z"),
        k=2,
        metric=lambda q: np.eye(3),
        potential=lambda q: 0.0,
        d_frame=lambda q: np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
        box={"x": (-2.0, 2.0), "y": (-2.0, 2.0), "z": (-2.0, 2.0)},
    )


# ---------------------------------------------------------------------------
# Registry


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params: Mapping[str, float]
    build: Callable[..., Model]
    lambdas: Mapping[str, Callable] = field(default_factory=dict)
    description: str = ""
    default_grid: str = ""

    def make(self, overrides: Mapping[str, float] | None = None) -> Model:
        params = dict(self.params)
        for key, val in (overrides or {}).items():
            if key not in params:
                raise KeyError(f"model {self.name!r} has no parameter {key!r} (known: {sorted(params)})")
            params[key] = float(val)
        return self.build(**params)


def _ball(m=1.0, I=0.4, r=1.0):
    return rolling_ball(m=m, I=I, r=r)


REGISTRY: dict[str, ModelSpec] = {
    "particle": ModelSpec(
        "particle",
        {"kx": 0.0, "ky": 0.0, "kz": 0.0},
        particle,
        {
            "hj-solution": lambda model, mu=0.6, E=0.5, branch=1: particle_hj_solution(mu, E, int(branch)),
            "perturbed": lambda model: particle_perturbed_lambda,
            "x-weighted": lambda model: particle_x_weighted_lambda,
        },
        "unit-mass particle in R^3 with zdot = y xdot",
        "y=-2:2:9, x=-1:1:3",
    ),
    "ball": ModelSpec(
        "ball",
        {"m": 1.0, "I": 0.4, "r": 1.0},
        _ball,
        {
            "constant": lambda model, ca=1.0, cb=1.0, cc=1.0: ball_constant_lambda(model.params, ca, cb, cc),
            "perturbed": lambda model, eps=0.5: ball_constant_lambda(model.params, perturb=eps),
        },
        "homogeneous sphere rolling on a plane, chart (x, y, theta, phi, psi)",
        "theta=0.2:2.9415926535897931:9, phi=-1:1:3, x=-1:1:3",
    ),
    "integrable": ModelSpec(
        "integrable",
        {},
        integrable_model,
        {"dx": lambda model: (lambda q: np.array([1.0, 0.0, 0.0]))},
        "Euclidean R^3 with D = span{d_x, d_y}",
        "x=-1:1:3, y=-1:1:3, z=-1:1:3",
    ),
}


def get_spec(name: str) -> ModelSpec:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(REGISTRY)}") from None


def build(name: str, params: Mapping[str, float] | None = None) -> Model:
    return get_spec(name).make(params)


def load_params(path) -> dict[str, float]:
    """Read ``key = value`` lines (``#`` starts a comment) into a dict of floats."""
    params = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            params[key] = float(val)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: {val!r} is not a number") from None
    return params


# ---------------------------------------------------------------------------
# Sampling


def sample_configuration(model: Model, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([model.box[c][0] for c in model.coord_names])
    hi = np.array([model.box[c][1] for c in model.coord_names])
    return rng.uniform(lo, hi)


def sample_on_M(model: Model, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """A random phase point on M: uniform q in the model box, Gaussian p projected by gamma."""
    q = sample_configuration(model, rng)
    p = scale * rng.standard_normal(model.n)
    return project_to_M(model, np.concatenate([q, p]))

