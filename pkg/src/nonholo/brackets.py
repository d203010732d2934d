"""Canonical, Eden, algebroid and symplectic-projection brackets.

Phase points are flat arrays ``x = (q, p)``; the symplectic matrix is
``Omega = [[0, I], [-I, 0]]`` so that ``omega(U, W) = U^T Omega W`` and
``X_F = (dF/dp, -dF/dq)``. With these choices
``{F, G} = omega(X_F, X_G) = F_q . G_p - F_p . G_q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffcore as dc
from .diffcore import real, solve
from .geometry import Model, annihilator, coframe_at, metric_at, split
from .projector import gamma_matrix, project_to_M


class OffManifoldError(ValueError):
    """A phase point that should lie on M does not."""


class SymplecticSplitError(ValueError):
    """``B^T Omega B`` is singular, so T^D M is not symplectic at the point."""


ON_M_TOL = 1e-8


# ---------------------------------------------------------------------------
# Observables


@dataclass(frozen=True)
class Observable:
    """A function on phase space ``x = (q, p)``."""

    eval: Callable
    label: str = ""

    def __call__(self, x):
        return self.eval(dc.as_array(x))


@dataclass(frozen=True)
class MObservable:
    """A function on M.

    ``eval_on_M(q, pi)`` takes adapted coordinates ``pi_a = <p, e_a(q)>``,
    which also makes it a function on D*. ``ambient(x)`` is an extension to
    all of T*Q used whenever a bracket needs one.
    """

    eval_on_M: Callable
    ambient: Callable
    label: str = ""

    def __call__(self, x):
        return self.ambient(dc.as_array(x))

    @classmethod
    def from_adapted(cls, model: Model, fn: Callable, label: str = "") -> "MObservable":
        """Wrap ``fn(q, pi)``; the ambient representative is
        ``x -> fn(q, E(q)^T p)``."""
        n = model.n

        def ambient(x):
            q, p = split(x, n)
            return fn(q, p @ model.d_frame(q))

        return cls(fn, ambient, label)

    @classmethod
    def from_ambient(cls, model: Model, F: Callable, label: str = "") -> "MObservable":
        """Wrap an ambient function ``F(x)`` and keep it as the extension."""
        n, k = model.n, model.k

        def on_M(q, pi):
            q = dc.as_array(q)
            p = dc.as_array(pi) @ coframe_at(model, q)[:k]
            return F(dc.as_array(np.concatenate([q, p])))

        def ambient(x):
            return F(dc.as_array(x))

        return cls(on_M, ambient, label)

    def with_ambient(self, ambient: Callable, label: str | None = None) -> "MObservable":
        """Same function on M, different extension."""
        return MObservable(self.eval_on_M, ambient, self.label if label is None else label)

    def _combine(self, other, op, sym):
        if isinstance(other, MObservable):
            return MObservable(
                lambda q, pi: op(self.eval_on_M(q, pi), other.eval_on_M(q, pi)),
                lambda x: op(self.ambient(x), other.ambient(x)),
                f"({self.label}{sym}{other.label})",
            )
        c = other
        return MObservable(
            lambda q, pi: op(self.eval_on_M(q, pi), c),
            lambda x: op(self.ambient(x), c),
            f"({self.label}{sym}{c!r})",
        )

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, "+")

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, "-")

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, "*")

    def __rmul__(self, other):
        return self.__mul__(other)


def coordinate(model: Model, i: int) -> MObservable:
    """The base coordinate ``q^i`` as a function on M."""
    return MObservable.from_adapted(model, lambda q, pi: q[i], model.coord_names[i])


def frame_momentum(model: Model, a: int) -> MObservable:
    """``pi_a = <p, e_a(q)>``."""
    return MObservable.from_adapted(model, lambda q, pi: pi[a], f"pi{a + 1}")


def constant(model: Model, c: float) -> MObservable:
    return MObservable(lambda q, pi: c, lambda x: c, repr(c))


def hamiltonian_observable(model: Model) -> Observable:
    n = model.n

    def H(x):
        q, p = split(x, n)
        return 0.5 * (p @ dc.solve_spd(metric_at(model, q, check=False), p)) + model.potential(q)

    return Observable(H, "H")


def constrained_hamiltonian(model: Model) -> MObservable:
    """``H_M``: the Hamiltonian restricted to M, extended by H itself."""
    return MObservable.from_ambient(model, hamiltonian_observable(model).eval, "H_M")


def coordinate_observables(model: Model) -> list[MObservable]:
    """``q^1..q^n`` followed by ``pi_1..pi_k``."""
    return [coordinate(model, i) for i in range(model.n)] + [frame_momentum(model, a) for a in range(model.k)]


# ---------------------------------------------------------------------------
# Canonical structure


def symplectic_matrix(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, I], [-I, Z]])


def hamiltonian_vector_field(F: Callable, x):
    """``X_F = (dF/dp, -dF/dq)`` at x."""
    x = dc.as_array(x)
    n = x.size // 2
    dF = dc.gradient(F, x)
    return dc.as_array(np.concatenate([dF[n:], -dF[:n]]))


def canonical_bracket(F: Callable, G: Callable, x):
    """``{F, G} = dF/dq . dG/dp - dF/dp . dG/dq``."""
    x = dc.as_array(x)
    n = x.size // 2
    dF = dc.gradient(F, x)
    dG = dc.gradient(G, x)
    return dF[:n] @ dG[n:] - dF[n:] @ dG[:n]


def on_M_residual(model: Model, x) -> float:
    q, p = split(real(dc.as_array(x)), model.n)
    return float(np.max(np.abs(p - gamma_matrix(model, q) @ p))) if p.size else 0.0


def require_on_M(model: Model, x, tol: float = ON_M_TOL):
    q, p = split(real(dc.as_array(x)), model.n)
    res = on_M_residual(model, x)
    if res > tol * max(1.0, float(np.max(np.abs(p)))):
        raise OffManifoldError(f"{model.name}: point is off M (|p - gamma p| = {res:.3e})")


# ---------------------------------------------------------------------------
# Eden bracket: {f, g}_E = {f o gamma, g o gamma}_can on M.


def _pulled(model: Model, f: MObservable):
    def h(x):
        return f.ambient(project_to_M(model, x))

    return h


def _eden_value(model, f, g, x):
    return canonical_bracket(_pulled(model, f), _pulled(model, g), x)


def eden_bracket(model: Model, f: MObservable, g: MObservable, x, check: bool = True):
    x = dc.as_array(x)
    if check:
        require_on_M(model, x)
    return _eden_value(model, f, g, x)


# ---------------------------------------------------------------------------
# Algebroid bracket on D*: {phi, psi}_{D*} = {phi o i_D*, psi o i_D*}_can o P*.


def i_D_star(model: Model, x):
    """``T*Q -> D*``: ``(q, p) -> (q, E(q)^T p)``."""
    q, p = split(x, model.n)
    return q, p @ model.d_frame(q)


def P_star(model: Model, q, y):
    """``D* -> T*Q``: the covector equal to y on D and zero on the g-complement."""
    q = dc.as_array(q)
    p = dc.as_array(y) @ coframe_at(model, q)[: model.k]
    return dc.as_array(np.concatenate([q, p]))


def m_to_dstar(model: Model, x):
    """The isomorphism ``i_{M,D*}`` restricted to M."""
    return i_D_star(model, dc.as_array(x))


def algebroid_bracket(model: Model, phi: Callable, psi: Callable, q, y):
    """``{phi, psi}_{D*}(q, y)`` for functions ``phi(q, y)`` on D*."""

    def lift(fn):
        def h(x):
            qq, yy = i_D_star(model, x)
            return fn(qq, yy)

        return h

    return canonical_bracket(lift(phi), lift(psi), P_star(model, q, y))


def algebroid_bracket_local(model: Model, phi: Callable, psi: Callable, q, y):
    """Same bracket from ``{q^i, y_a} = e^i_a`` and ``{y_a, y_b} = -C^c_ab y_c``."""
    from .geometry import structure_functions

    q = dc.as_array(q)
    y = dc.as_array(y)
    n, k = model.n, model.k
    z = dc.as_array(np.concatenate([q, y]))
    dphi = dc.gradient(lambda v: phi(v[:n], v[n:]), z)
    dpsi = dc.gradient(lambda v: psi(v[:n], v[n:]), z)
    e = model.d_frame(q)
    C = structure_functions(model, q).C[:k, :k, :k]
    Pi = -np.einsum("cab,c->ab", C, y)
    return (
        dphi[:n] @ e @ dpsi[n:]
        - dphi[n:] @ e.T @ dpsi[:n]
        + dphi[n:] @ Pi @ dpsi[n:]
    )


def dstar_bracket_on_M(model: Model, f: MObservable, g: MObservable, x):
    """``{f, g}_{D*}`` evaluated at ``i_{M,D*}(x)``, with f and g read as functions on D*."""
    q, y = m_to_dstar(model, x)
    return algebroid_bracket(model, f.eval_on_M, g.eval_on_M, q, y)


# ---------------------------------------------------------------------------
# Symplectic projection onto T^D M.


@dataclass(frozen=True)
class SymplecticSplitAt:
    x: np.ndarray
    basis_TDM: np.ndarray
    proj_P: np.ndarray
    proj_Q: np.ndarray


def constraint_normals(model: Model, q):
    """``N = g^{-1} mu_perp^T``, so the constraints read ``Psi = N^T p``."""
    mu = annihilator(model, q)
    return dc.solve_spd(metric_at(model, q, check=False), mu.T)


def tdm_basis(model: Model, x):
    """``2n x 2k`` columns spanning ``{Z in T_x M : T pi_Q(Z) in D}``.

    Horizontal generators ``(e_a, -N (N^T N)^{-1} K e_a)`` with
    ``K = d_q(N^T p)``, then vertical ones ``(0, g e_b)``.
    """
    x = dc.as_array(x)
    n, k = model.n, model.k
    q, p = split(x, n)
    e = model.d_frame(q)
    g = metric_at(model, q, check=False)
    zero = np.zeros((n, k))
    if k == n:
        return dc.as_array(np.block([[e, zero], [zero, g @ e]]))
    N, dN = dc.value_and_jacobian(lambda s: constraint_normals(model, s), q)
    K = np.einsum("i,iAs->As", p, dN)
    corr = -N @ solve(N.T @ N, K @ e)
    H = np.concatenate([e, corr], axis=0)
    V = np.concatenate([zero, g @ e], axis=0)
    return dc.as_array(np.concatenate([H, V], axis=1))


def symplectic_split(model: Model, x, check: bool = True) -> SymplecticSplitAt:
    x = dc.as_array(x)
    if check:
        require_on_M(model, x)
    n = model.n
    B = tdm_basis(model, x)
    Om = symplectic_matrix(n)
    G = B.T @ Om @ B
    try:
        coeff = solve(G, B.T @ Om)
    except np.linalg.LinAlgError as exc:
        raise SymplecticSplitError(f"{model.name}: B^T Omega B singular at x={real(x)}") from exc
    P = dc.as_array(B @ coeff)
    return SymplecticSplitAt(x, B, P, np.eye(2 * n) - P)


def nonholonomic_bracket(model: Model, f: MObservable, g: MObservable, x, check: bool = True, extension=None):
    """``omega(P X_f~, P X_g~)``.

    ``extension`` picks the extensions: ``None`` uses each observable's
    ambient representative, ``"gamma"`` uses ``f o gamma``, and a pair of
    callables overrides both.
    """
    x = dc.as_array(x)
    split_at = symplectic_split(model, x, check)
    if extension is None:
        F, G = f.ambient, g.ambient
    elif extension == "gamma":
        F, G = _pulled(model, f), _pulled(model, g)
    else:
        F, G = extension
    P = split_at.proj_P
    Om = symplectic_matrix(model.n)
    return (P @ hamiltonian_vector_field(F, x)) @ Om @ (P @ hamiltonian_vector_field(G, x))


# ---------------------------------------------------------------------------

BRACKET_KINDS = ("E", "nh", "D*")


def bracket(model: Model, kind: str, f: MObservable, g: MObservable, x, check: bool = True):
    if kind == "E":
        return eden_bracket(model, f, g, x, check)
    if kind == "nh":
        return nonholonomic_bracket(model, f, g, x, check)
    if kind == "D*":
        if check:
            require_on_M(model, x)
        return dstar_bracket_on_M(model, f, g, x)
    raise ValueError(f"unknown bracket {kind!r}; choose from {BRACKET_KINDS}")


def bracket_observable(model: Model, kind: str, f: MObservable, g: MObservable) -> MObservable:
    """``{f, g}`` as a function on M, differentiable again for nested brackets."""
    label = f"{{{f.label},{g.label}}}_{kind}"
    n = model.n
    if kind == "E":

        def ambient(x):
            return _eden_value(model, f, g, x)

        return MObservable(lambda q, pi: ambient(P_star(model, q, pi)), ambient, label)
    if kind == "nh":

        def ambient(x):
            return nonholonomic_bracket(model, f, g, project_to_M(model, x), check=False)

        return MObservable(lambda q, pi: ambient(P_star(model, q, pi)), ambient, label)
    if kind == "D*":

        def on_dstar(q, y):
            return algebroid_bracket(model, f.eval_on_M, g.eval_on_M, q, y)

        return MObservable.from_adapted(model, on_dstar, label)
    raise ValueError(f"unknown bracket {kind!r}; choose from {BRACKET_KINDS}")


def jacobiator(model: Model, f: MObservable, g: MObservable, h: MObservable, x, kind: str = "E"):
    """``{f,{g,h}} + {g,{h,f}} + {h,{f,g}}`` at x."""
    x = dc.as_array(x)
    require_on_M(model, x)
    total = 0.0
    for a, b, c in ((f, g, h), (g, h, f), (h, f, g)):
        total = total + bracket(model, kind, a, bracket_observable(model, kind, b, c), x, check=False)
    return total


def bracket_table(model: Model, x, kinds=BRACKET_KINDS):
    """Pairwise brackets of ``q^i`` and ``pi_a`` under each bracket kind,
    plus the largest discrepancy between kinds."""
    obs = coordinate_observables(model)
    labels = [o.label for o in obs]
    tables = {}
    for kind in kinds:
        T = np.zeros((len(obs), len(obs)))
        for i, a in enumerate(obs):
            for j, b in enumerate(obs):
                if j > i:
                    T[i, j] = float(real(bracket(model, kind, a, b, x, check=(i == 0 and j == 1))))
                    T[j, i] = -T[i, j]
        tables[kind] = T
    disc = 0.0
    for i, ka in enumerate(kinds):
        for kb in kinds[i + 1 :]:
            disc = max(disc, float(np.max(np.abs(tables[ka] - tables[kb]))))
    return labels, tables, disc
