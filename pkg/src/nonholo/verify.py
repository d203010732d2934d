"""Seeded invariant suite run by ``nonholo verify``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import brackets as B
from . import diffcore as dc
from .diffcore import real
from .dynamics import (
    constraint_values,
    hamiltonian_vf,
    nh_vf_gamma,
    nh_vf_multipliers,
    nh_vf_projection,
)
from .geometry import Model, annihilator, coframe_at, full_frame, metric_at, sharp
from .models import sample_configuration, sample_on_M
from .projector import decompose_covector, eden_projector, tangent_gamma

BRACKET_TOL = 1e-7
ROUTE_TOL = 1e-7
TANGENCY_TOL = 1e-9
PROJECTOR_TOL = 1e-9
JACOBI_ZERO_TOL = 1e-8
JACOBI_NONZERO = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tol": self.tol, "passed": self.passed, "detail": self.detail}


def _scaled(diff, ref) -> float:
    """Absolute error when ``|ref| <= 1``, relative otherwise."""
    return float(np.max(np.abs(diff)) / max(1.0, float(np.max(np.abs(ref))) if np.size(ref) else 1.0))


def _max_check(name, values, tol, detail=""):
    v = max(values) if values else 0.0
    return CheckResult(name, v, tol, bool(v <= tol), detail)


# ---------------------------------------------------------------------------


def check_frames(model: Model, rng, points: int) -> list[CheckResult]:
    dual, ortho = [], []
    for _ in range(points):
        q = sample_configuration(model, rng)
        F = full_frame(model, q)
        dual.append(float(np.max(np.abs(coframe_at(model, q) @ F - np.eye(model.n)))))
        g = metric_at(model, q)
        ortho.append(float(np.max(np.abs(F[:, : model.k].T @ g @ F[:, model.k :]))) if model.k < model.n else 0.0)
    return [
        _max_check("coframe.frame = I", dual, PROJECTOR_TOL),
        _max_check("e_a g-orthogonal to e_A", ortho, PROJECTOR_TOL),
    ]


def check_projector(model: Model, rng, points: int) -> list[CheckResult]:
    idem, rank, trace, sym, fixes, kills, reasm, annih, image = ([] for _ in range(9))
    for _ in range(points):
        q = sample_configuration(model, rng)
        P = eden_projector(model, q, derivative=False)
        G = P.gamma
        idem.append(P.idempotence_residual)
        rank.append(abs(P.rank - model.k))
        trace.append(abs(float(np.trace(G)) - model.k))
        sym.append(float(np.max(np.abs(P.eden_E - P.eden_E.T))))
        g = metric_at(model, q)
        e = model.d_frame(q)
        fixes.append(_scaled(G @ (g @ e) - g @ e, g @ e))
        mu = annihilator(model, q)
        kills.append(_scaled(G @ mu.T, mu) if mu.size else 0.0)
        p = rng.standard_normal(model.n)
        pM, p0 = decompose_covector(model, q, p)
        reasm.append(float(np.max(np.abs(pM + p0 - p))))
        annih.append(float(np.max(np.abs(p0 @ e))))
        image.append(float(np.max(np.abs(mu @ sharp(model, q, pM)))) if mu.size else 0.0)
    return [
        _max_check("gamma idempotent", idem, PROJECTOR_TOL),
        _max_check("rank gamma = k", rank, 0.0),
        _max_check("trace gamma = k", trace, PROJECTOR_TOL),
        _max_check("Eden matrix symmetric", sym, PROJECTOR_TOL),
        _max_check("gamma fixes flat(D)", fixes, PROJECTOR_TOL),
        _max_check("gamma kills D-annihilator", kills, PROJECTOR_TOL),
        _max_check("p = p_M + p_0", reasm, PROJECTOR_TOL),
        _max_check("p_0 annihilates D", annih, PROJECTOR_TOL),
        _max_check("sharp(p_M) in D", image, PROJECTOR_TOL),
    ]


def check_brackets(model: Model, rng, points: int) -> list[CheckResult]:
    pool = B.coordinate_observables(model) + [B.constrained_hamiltonian(model)]
    e_nh, e_ds = [], []
    for _ in range(points):
        x = sample_on_M(model, rng)
        i, j = rng.choice(len(pool), size=2, replace=False)
        f, g = pool[i], pool[j]
        vE = real(B.eden_bracket(model, f, g, x))
        vN = real(B.nonholonomic_bracket(model, f, g, x))
        vD = real(B.bracket(model, "D*", f, g, x))
        e_nh.append(_scaled(vE - vN, vE))
        e_ds.append(_scaled(vE - vD, vE))
    return [
        _max_check("{,}_E = {,}_nh", e_nh, BRACKET_TOL),
        _max_check("{,}_E = {,}_D* pulled back", e_ds, BRACKET_TOL),
    ]


def check_P_equals_Tgamma(model: Model, rng, points: int) -> list[CheckResult]:
    out = []
    for _ in range(points):
        x = sample_on_M(model, rng)
        q = x[: model.n]
        Zq = model.d_frame(q) @ rng.standard_normal(model.k)
        Z = np.concatenate([Zq, rng.standard_normal(model.n)])
        PZ = B.symplectic_split(model, x).proj_P @ Z
        TZ = real(tangent_gamma(model, x, Z))
        out.append(_scaled(PZ - TZ, TZ))
    return [_max_check("P(Z) = T gamma(Z) on T^D(T*Q)", out, BRACKET_TOL)]


def check_routes(model: Model, rng, points: int) -> list[CheckResult]:
    g_err, m_err, tang = [], [], []
    for _ in range(points):
        x = sample_on_M(model, rng)
        X = real(nh_vf_projection(model, x))
        g_err.append(_scaled(X - real(nh_vf_gamma(model, x)), X))
        m_err.append(_scaled(X - real(nh_vf_multipliers(model, x)[0]), X))
        t = real(dc.directional_derivative(lambda s: constraint_values(model, s), x, X))
        tang.append(float(np.max(np.abs(t))) if np.size(t) else 0.0)
    return [
        _max_check("X_nh: projection = T gamma route", g_err, ROUTE_TOL),
        _max_check("X_nh: projection = multiplier route", m_err, ROUTE_TOL),
        _max_check("X_nh tangent to M", tang, TANGENCY_TOL),
    ]


def check_unconstrained_limit(model: Model, rng, points: int) -> list[CheckResult]:
    if model.k != model.n:
        return []
    errs = []
    for _ in range(points):
        x = sample_on_M(model, rng)
        errs.append(_scaled(real(nh_vf_projection(model, x)) - real(hamiltonian_vf(model, x)), 1.0))
    return [_max_check("k = n: X_nh = X_H", errs, ROUTE_TOL)]


def jacobiator_scan(model: Model, x, kinds=B.BRACKET_KINDS, stop_at: float | None = None):
    """Jacobiators of coordinate triples; returns ``(max |J|, triple, kind)``."""
    obs = B.coordinate_observables(model)
    best = (0.0, None, None)
    # triples with more momenta first: those are where Jacobi usually fails
    triples = sorted(itertools.combinations(range(len(obs)), 3), key=lambda t: -sum(i >= model.n for i in t))
    for kind in kinds:
        for t in triples:
            v = abs(float(real(B.jacobiator(model, *(obs[i] for i in t), x, kind))))
            if v > best[0]:
                best = (v, tuple(obs[i].label for i in t), kind)
            if stop_at is not None and best[0] > stop_at:
                return best
    return best


def check_jacobiator(model: Model, rng, integrable: bool) -> list[CheckResult]:
    x = sample_on_M(model, rng)
    if integrable:
        v, t, kind = jacobiator_scan(model, x)
        detail = f"largest {t} ({kind})" if t else ""
        return [CheckResult("jacobiator = 0 (integrable D)", v, JACOBI_ZERO_TOL, v <= JACOBI_ZERO_TOL, detail)]
    out = []
    for kind in B.BRACKET_KINDS:
        v, t, _ = jacobiator_scan(model, x, (kind,), stop_at=JACOBI_NONZERO)
        out.append(
            CheckResult(f"jacobiator != 0 ({kind})", v, JACOBI_NONZERO, v > JACOBI_NONZERO, f"triple {t}")
        )
    return out


def run_suite(model: Model, seed: int = 0, points: int = 20, integrable: bool | None = None) -> list[CheckResult]:
    """Every check on ``points`` seeded random points. ``integrable`` flips the
    jacobiator expectation; by default it is read from the frame's structure
    functions at one point."""
    rng = np.random.default_rng(seed)
    if integrable is None:
        integrable = is_integrable_at(model, sample_configuration(model, np.random.default_rng(seed)))
    results = []
    results += check_frames(model, rng, points)
    results += check_projector(model, rng, points)
    results += check_brackets(model, rng, points)
    results += check_P_equals_Tgamma(model, rng, points)
    results += check_routes(model, rng, points)
    results += check_unconstrained_limit(model, rng, points)
    results += check_jacobiator(model, rng, integrable)
    return results


def is_integrable_at(model: Model, q, tol: float = 1e-10) -> bool:
    """Frobenius test at q: the brackets ``[e_a, e_b]`` stay in D."""
    from .geometry import structure_functions

    C = real(structure_functions(model, q).C)
    k = model.k
    return bool(np.max(np.abs(C[k:, :k, :k]), initial=0.0) <= tol)
