"""Hamiltonian and nonholonomic vector fields, multipliers and RK4 integration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .brackets import (
    MObservable,
    OffManifoldError,
    constraint_normals,
    hamiltonian_observable,
    hamiltonian_vector_field,
    symplectic_split,
)
from .diffcore import real, solve
from .geometry import ChartDomainError, Model, annihilator, split
from .projector import apply_gamma, project_to_M, tangent_gamma

INITIAL_TOL = 1e-10


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_x(cls, x, n: int) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        return cls(x[:n].copy(), x[n:].copy())


@dataclass(frozen=True)
class Multipliers:
    lambda_bar: np.ndarray


@dataclass
class Trajectory:
    """States are stored as rows ``(q, p)``; ``diagnostics`` holds one array per
    monitored quantity, aligned with ``times``."""

    times: np.ndarray
    states: np.ndarray
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    status: str = "ok"

    def point(self, i: int) -> PhasePoint:
        n = self.states.shape[1] // 2
        return PhasePoint.from_x(self.states[i], n)

    def drift(self, name: str) -> float:
        v = self.diagnostics[name]
        return float(np.max(np.abs(v - v[0]))) if v.size else 0.0


# ---------------------------------------------------------------------------


def hamiltonian(model: Model, x):
    return hamiltonian_observable(model)(x)


def hamiltonian_vf(model: Model, x):
    return hamiltonian_vector_field(hamiltonian_observable(model).eval, dc.as_array(x))


def constraint_values(model: Model, x):
    """``Psi^A = <p, g^{-1} mu^A>``."""
    q, p = split(x, model.n)
    if model.k == model.n:
        return np.zeros(0)
    return p @ constraint_normals(model, q)


def constraint_residual(model: Model, x) -> float:
    v = real(constraint_values(model, x))
    return float(np.max(np.abs(v))) if v.size else 0.0


def nh_vf_projection(model: Model, x, check: bool = True):
    """``X_nh = P(X_H)``."""
    x = dc.as_array(x)
    P = symplectic_split(model, x, check).proj_P
    return P @ hamiltonian_vf(model, x)


def nh_vf_gamma(model: Model, x):
    """``X_nh = T gamma (X_{H o gamma})``."""
    x = dc.as_array(x)
    H = hamiltonian_observable(model).eval
    Z = hamiltonian_vector_field(lambda s: H(project_to_M(model, s)), x)
    return tangent_gamma(model, x, Z)


def nh_vf_multipliers(model: Model, x):
    """Constrained Hamilton equations with the multipliers fixed by
    ``d/dt Psi = 0``: ``qdot = g^{-1} p``, ``pdot = -H_q + mu^T lambda``."""
    x = dc.as_array(x)
    n = model.n
    q, p = split(x, n)
    XH = hamiltonian_vf(model, x)
    if model.k == n:
        return XH, Multipliers(np.zeros(0))
    qdot, pdot_free = XH[:n], XH[n:]
    mu = annihilator(model, q)
    N, dN = dc.value_and_jacobian(lambda s: constraint_normals(model, s), q)
    K = np.einsum("i,iAs->As", p, dN)
    try:
        lam = solve(N.T @ mu.T, -(K @ qdot + N.T @ pdot_free))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"{model.name}: multiplier system singular at x={real(x)}") from exc
    X = dc.as_array(np.concatenate([qdot, pdot_free + mu.T @ lam]))
    return X, Multipliers(np.asarray(real(lam), dtype=float))


ROUTES = {
    "projection": lambda model, x: nh_vf_projection(model, x, check=False),
    "gamma": nh_vf_gamma,
    "multipliers": lambda model, x: nh_vf_multipliers(model, x)[0],
}


def evolve_observable(model: Model, f: MObservable, x):
    """``fdot = X_nh(f)`` as the derivative of f's ambient representative."""
    x = dc.as_array(x)
    return dc.directional_derivative(f.ambient, x, nh_vf_projection(model, x))


# ---------------------------------------------------------------------------
# Integration


def _diagnostics(model: Model, x) -> dict[str, float]:
    out = {"residual": constraint_residual(model, x), "energy": float(hamiltonian(model, x))}
    for name, fn in model.first_integrals.items():
        out[name] = float(real(fn(x)))
    return out


def integrate(
    model: Model,
    x0,
    t_end: float,
    dt: float,
    project_each_step: bool = True,
    project_initial: bool = False,
    route: str = "projection",
) -> Trajectory:
    """Classical RK4 on ``X_nh``.

    ``x0`` must lie on M (constraint residual within 1e-10) unless
    ``project_initial`` is set, in which case ``p0`` is replaced by
    ``gamma(q0) p0``. Leaving the chart stops the run early and sets
    ``status``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n = model.n
    x = np.asarray(x0, dtype=float).copy()
    model.check_point(x[:n])
    if project_initial:
        x = np.asarray(project_to_M(model, x), dtype=float)
    res = constraint_residual(model, x)
    if res > INITIAL_TOL:
        raise OffManifoldError(
            f"{model.name}: initial point is off M (residual {res:.3e}); use project_initial to project it"
        )
    rhs = ROUTES[route]

    def f(y):
        return np.asarray(real(rhs(model, y)), dtype=float)

    steps = int(round(t_end / dt))
    times = [0.0]
    states = [x.copy()]
    diag = {k: [v] for k, v in _diagnostics(model, x).items()}
    status = "ok"
    for i in range(1, steps + 1):
        try:
            k1 = f(x)
            k2 = f(x + 0.5 * dt * k1)
            k3 = f(x + 0.5 * dt * k2)
            k4 = f(x + dt * k3)
            y = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            model.check_point(y[:n])
            if project_each_step:
                y[n:] = real(apply_gamma(model, y[:n], y[n:]))
            d = _diagnostics(model, y)
        except (ChartDomainError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            status = f"stopped at t={i * dt:.6g}: {exc}"
            break
        x = y
        times.append(i * dt)
        states.append(x.copy())
        for k, v in d.items():
            diag[k].append(v)
    return Trajectory(
        np.asarray(times),
        np.asarray(states),
        {k: np.asarray(v) for k, v in diag.items()},
        status,
    )
