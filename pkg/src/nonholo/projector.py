"""The Eden projector: orthogonal projection of covectors onto M along D°.

Matrix convention: ``gamma`` acts on a covector stored as a column,
``(gamma @ p)[i] = sum_j gamma[i, j] p[j]``, so ``gamma[i, j]`` is the
component usually written with upper index j and lower index i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import real
from .geometry import ChartDegeneracyError, Model, metric_at, split


@dataclass(frozen=True)
class EdenProjectorAt:
    q: np.ndarray
    gamma: np.ndarray
    eden_E: np.ndarray
    dgamma: np.ndarray | None  # dgamma[i, j, l] = d gamma[i, j] / d q^l

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(real(self.gamma), tol=1e-9))

    @property
    def idempotence_residual(self) -> float:
        G = real(self.gamma)
        return float(np.max(np.abs(G @ G - G)))


def eden_matrix(model: Model, q):
    """``E = e C^{-1} e^T`` with ``C_ab = g(e_a, e_b)``."""
    g = metric_at(model, q)
    e = model.d_frame(q)
    C = e.T @ g @ e
    try:
        X = dc.solve_spd(C, e.T)
    except np.linalg.LinAlgError as exc:
        raise ChartDegeneracyError(f"{model.name}: Gram matrix of D singular at q={real(q)}") from exc
    return e @ X


def gamma_matrix(model: Model, q):
    return metric_at(model, q) @ eden_matrix(model, q)


def eden_projector(model: Model, q, derivative: bool = True) -> EdenProjectorAt:
    q = dc.as_array(q)
    model.check_point(real(q))
    n = model.n
    E = eden_matrix(model, q)
    if derivative:
        gamma, dgamma = dc.value_and_jacobian(lambda x: gamma_matrix(model, x), q)
        dgamma = dgamma.reshape(n, n, n)
    else:
        gamma, dgamma = metric_at(model, q) @ E, None
    return EdenProjectorAt(q, gamma, E, dgamma)


def apply_gamma(model: Model, q, p):
    return gamma_matrix(model, q) @ dc.as_array(p)


def decompose_covector(model: Model, q, p):
    """Split p into its M part and its D° part."""
    p = dc.as_array(p)
    p_M = apply_gamma(model, q, p)
    return p_M, p - p_M


def project_to_M(model: Model, x):
    """``gamma`` as a map on phase space: ``(q, p) -> (q, gamma(q) p)``."""
    q, p = split(x, model.n)
    return dc.as_array(np.concatenate([q, apply_gamma(model, q, p)]))


def pullback_by_gamma(model: Model, f):
    """``f o gamma`` for an ambient function ``f(x)``."""

    def pulled(x):
        return f(project_to_M(model, x))

    return pulled


def tangent_gamma(model: Model, x, Z):
    """Push a tangent vector at x through the map ``(q, p) -> (q, gamma(q) p)``."""
    n = model.n
    q, p = split(x, n)
    Zq, Zp = split(Z, n)
    moving = dc.directional_derivative(lambda s: gamma_matrix(model, s) @ p, q, Zq)
    return dc.as_array(np.concatenate([Zq, apply_gamma(model, q, Zp) + moving]))
