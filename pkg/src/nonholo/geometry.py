"""System data (Q, g, V, D) in a chart, adapted frames and structure functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import diffcore as dc
from .diffcore import SmoothMap, real, solve


class ChartDegeneracyError(ValueError):
    """The distribution (or a frame built from it) loses rank at a point."""


class MetricError(ValueError):
    """The metric is not positive-definite at a point."""


class ChartDomainError(ValueError):
    """A point lies outside the chart's declared domain."""


def _as_map(fn, n, m, shape=None):
    if fn is None or isinstance(fn, SmoothMap):
        return fn
    return SmoothMap(n, m, fn, shape)


@dataclass(frozen=True)
class Model:
    """A nonholonomic mechanical system in one chart.

    ``d_frame(q)`` returns an ``n x k`` matrix whose columns span D at q.
    ``perp_frame``, when given, returns ``n x (n-k)`` columns spanning the
    g-orthogonal complement; otherwise it is built by Gram-Schmidt.
    ``first_integrals`` maps names to functions of a phase point ``x``
    that should stay constant along the constrained flow. ``box`` gives the
    coordinate ranges random test points are drawn from.
    """

    name: str
    coord_names: tuple[str, ...]
    k: int
    metric: Callable
    potential: Callable
    d_frame: Callable
    perp_frame: Callable | None = None
    domain_guard: Callable | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    first_integrals: Mapping[str, Callable] = field(default_factory=dict)
    box: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.coord_names)
        if not 0 < self.k <= n:
            raise ValueError(f"rank k={self.k} must satisfy 0 < k <= n={n}")
        object.__setattr__(self, "coord_names", tuple(self.coord_names))
        object.__setattr__(self, "metric", _as_map(self.metric, n, n * n, (n, n)))
        object.__setattr__(self, "potential", _as_map(self.potential, n, 1, ()))
        object.__setattr__(self, "d_frame", _as_map(self.d_frame, n, n * self.k, (n, self.k)))
        if self.perp_frame is not None:
            object.__setattr__(
                self, "perp_frame", _as_map(self.perp_frame, n, n * (n - self.k), (n, n - self.k))
            )

    @property
    def n(self) -> int:
        return len(self.coord_names)

    def check_point(self, q):
        if len(q) != self.n:
            raise dc.DimensionError(f"{self.name}: expected {self.n} coordinates, got {len(q)}")
        if self.domain_guard is not None and not self.domain_guard(real(np.asarray(q, dtype=object))):
            raise ChartDomainError(f"{self.name}: point {real(np.asarray(q, dtype=object))} is outside the chart")


@dataclass(frozen=True)
class AdaptedFrame:
    q: np.ndarray
    E_cols: np.ndarray
    coframe: np.ndarray
    gram_D: np.ndarray
    gram_D_inv: np.ndarray

    @property
    def k(self) -> int:
        return self.gram_D.shape[0]


@dataclass(frozen=True)
class StructureFunctions:
    """``C[k, i, j]`` with ``[e_i, e_j] = C[k, i, j] e_k``."""

    q: np.ndarray
    C: np.ndarray
    residual: float


def split(x, n):
    x = dc.as_array(x)
    return x[:n], x[n:]


def metric_at(model: Model, q, check: bool = True):
    g = model.metric(q)
    if check and g.dtype != object:
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            lo = float(np.min(np.linalg.eigvalsh(0.5 * (g + g.T))))
            raise MetricError(f"{model.name}: metric not positive-definite at q={q} (eigenvalue {lo:.3e})")
    return g


def flat(model: Model, q, v):
    return metric_at(model, q) @ dc.as_array(v)


def sharp(model: Model, q, p):
    return dc.solve_spd(metric_at(model, q), dc.as_array(p))


def inner(g, u, v):
    return u @ (g @ v)


def _gram_schmidt_D(g, E):
    """g-orthonormal basis of the column span of E (rank check included)."""
    basis = []
    scale = max(1.0, float(np.max(np.abs(real(E))))) if E.size else 1.0
    for a in range(E.shape[1]):
        v = E[:, a]
        for u in basis:
            v = v - inner(g, u, v) * u
        nrm = dc.sqrt(inner(g, v, v))
        if real(nrm) < 1e-10 * scale:
            raise ChartDegeneracyError("distribution frame is rank-deficient at this point")
        basis.append(v / nrm)
    return basis


def orthogonal_complement(model: Model, q):
    """Columns spanning the g-orthogonal complement of D at q.

    Candidates are coordinate vectors; at each step the one with the largest
    g-norm after projecting out D and already-accepted vectors wins (lowest
    index on ties) and is normalised.
    """
    n, k = model.n, model.k
    g = metric_at(model, q)
    E = model.d_frame(q)
    basis = _gram_schmidt_D(g, E)
    accepted = []
    remaining = list(range(n))
    for _ in range(n - k):
        best = None
        for i in remaining:
            v = np.zeros(n, dtype=object if dc.is_dual(g) else float)
            v[i] = 1.0
            for u in basis:
                v = v - inner(g, u, v) * u
            sq = inner(g, v, v)
            if real(sq) <= 1e-20:
                continue
            nrm = dc.sqrt(sq)
            if best is None or real(nrm) > real(best[1]):
                best = (i, nrm, v)
        if best is None or real(best[1]) < 1e-10:
            raise ChartDegeneracyError(f"{model.name}: cannot complete the frame at q={real(q)}")
        i, nrm, v = best
        u = v / nrm
        basis.append(u)
        accepted.append(u)
        remaining.remove(i)
    if not accepted:
        return np.zeros((n, 0))
    return dc.as_array(np.stack(accepted, axis=1))


def complement_frame(model: Model, q):
    if model.perp_frame is not None:
        return model.perp_frame(q)
    return orthogonal_complement(model, q)


def full_frame(model: Model, q):
    """``n x n`` matrix ``[e_a | e_A]``."""
    E = model.d_frame(q)
    P = complement_frame(model, q)
    if P.shape[1] == 0:
        return E
    return dc.as_array(np.concatenate([E, P], axis=1))


def coframe_at(model: Model, q):
    """Rows are the dual basis ``{mu^a, mu^A}`` of the full frame."""
    F = full_frame(model, q)
    try:
        return solve(F, np.eye(model.n))
    except np.linalg.LinAlgError as exc:
        raise ChartDegeneracyError(f"{model.name}: adapted frame singular at q={real(q)}") from exc


def annihilator(model: Model, q):
    """Rows ``mu^A`` spanning the annihilator of D."""
    return coframe_at(model, q)[model.k :]


def adapted_frame(model: Model, q) -> AdaptedFrame:
    model.check_point(real(dc.as_array(q)))
    g = metric_at(model, q)
    F = full_frame(model, q)
    try:
        cof = solve(F, np.eye(model.n))
    except np.linalg.LinAlgError as exc:
        raise ChartDegeneracyError(f"{model.name}: adapted frame singular at q={real(q)}") from exc
    E = F[:, : model.k]
    C = E.T @ g @ E
    try:
        Cinv = dc.solve_spd(C, np.eye(model.k))
    except np.linalg.LinAlgError as exc:
        raise ChartDegeneracyError(f"{model.name}: Gram matrix of D singular at q={real(q)}") from exc
    return AdaptedFrame(dc.as_array(q), F, cof, C, Cinv)


def lie_bracket(X: Callable, Y: Callable, q):
    """``[X, Y](q) = DY(q) X(q) - DX(q) Y(q)`` for vector fields given as maps."""
    Xq, JX = dc.value_and_jacobian(X, q)
    Yq, JY = dc.value_and_jacobian(Y, q)
    return JY @ Xq - JX @ Yq


def structure_functions(model: Model, q) -> StructureFunctions:
    n = model.n
    F, dF = dc.value_and_jacobian(lambda x: full_frame(model, x), q)
    # dF[r, i, s] = d F[r, i] / d q^s
    brackets = np.einsum("rjs,si->rij", dF, F) - np.einsum("ris,sj->rij", dF, F)
    cof = solve(F, np.eye(n))
    C = dc.as_array(np.einsum("kr,rij->kij", cof, brackets))
    residual = float(np.max(np.abs(real(np.einsum("rk,kij->rij", F, C) - brackets)))) if n else 0.0
    return StructureFunctions(dc.as_array(q), C, residual)
