"""Residual checks for candidate solutions of the nonholonomic HJ equations.

For a one-form ``lambda`` on Q with ``X = g^{-1} lambda`` the checks are

* membership      ``lambda - gamma lambda``
* closedness on D ``d lambda(e_a, e_b)``
* classical HJ    ``gamma d(H o lambda)``
* generalized HJ  ``gamma (d(H o lambda) + i_X d lambda)``, and its frame
  form ``e_a(H o lambda) + d^D lambda(X, e_a)``
* relatedness     ``T lambda (X) - X_nh(lambda(q))``

all reported as sup-norms over an explicit grid.
"""

from __future__ import annotations

import ast
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import diffcore as dc
from .brackets import hamiltonian_observable
from .diffcore import SmoothMap, real
from .dynamics import nh_vf_projection
from .geometry import Model, lie_bracket, metric_at
from .projector import gamma_matrix

TOL_HJ = 1e-8


@dataclass(frozen=True)
class OneFormField:
    lam: Callable
    label: str = ""

    def __call__(self, q):
        return dc.as_array(self.lam(q))


def as_one_form(model: Model, lam, label: str = "") -> OneFormField:
    if isinstance(lam, OneFormField):
        return lam
    return OneFormField(SmoothMap(model.n, model.n, lam), label)


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True)
class Grid:
    """Tensor grid over some coordinates, others held at ``base``."""

    axes: dict[str, np.ndarray]
    base: np.ndarray
    coord_names: tuple[str, ...]
    spec: str = ""

    def points(self):
        idx = [self.coord_names.index(c) for c in self.axes]
        for combo in itertools.product(*self.axes.values()):
            q = self.base.copy()
            for i, v in zip(idx, combo):
                q[i] = v
            yield q

    def __len__(self):
        return int(np.prod([len(a) for a in self.axes.values()])) if self.axes else 1

    def describe(self) -> dict:
        return {
            "spec": self.spec,
            "size": len(self),
            "axes": {k: [float(v[0]), float(v[-1]), len(v)] for k, v in self.axes.items()},
            "base": {c: float(v) for c, v in zip(self.coord_names, self.base)},
        }


def default_base(model: Model) -> np.ndarray:
    """Centre of the model's sampling box (0 for unboxed coordinates)."""
    return np.array([0.5 * sum(model.box[c]) if c in model.box else 0.0 for c in model.coord_names])


def parse_grid(model: Model, spec: str) -> Grid:
    """``"y=-2:2:9, theta=0.2:2.9:5, x=0.3"``: ``lo:hi:count`` ranges or fixed values."""
    base = default_base(model)
    axes: dict[str, np.ndarray] = {}
    for part in filter(None, (s.strip() for s in spec.replace(";", ",").split(","))):
        if "=" not in part:
            raise ValueError(f"grid entry {part!r} is not 'name=value' or 'name=lo:hi:count'")
        name, rhs = (s.strip() for s in part.split("=", 1))
        if name not in model.coord_names:
            raise ValueError(f"unknown coordinate {name!r}; {model.name} has {list(model.coord_names)}")
        bits = rhs.split(":")
        if len(bits) == 1:
            base[model.coord_names.index(name)] = float(bits[0])
        elif len(bits) == 3:
            lo, hi, cnt = float(bits[0]), float(bits[1]), int(bits[2])
            if cnt < 1:
                raise ValueError(f"grid count for {name!r} must be positive")
            axes[name] = np.linspace(lo, hi, cnt)
        else:
            raise ValueError(f"cannot read grid range {rhs!r}")
    grid = Grid(axes, base, model.coord_names, spec)
    if len(grid) == 0:
        raise ValueError("grid is empty")
    return grid


# ---------------------------------------------------------------------------
# Pointwise pieces


def xnh_lambda(model: Model, lam, q):
    """``X^lambda = g^{-1} lambda(q)``."""
    q = dc.as_array(q)
    return dc.solve_spd(metric_at(model, q), as_one_form(model, lam)(q))


def _H_of_lambda(model: Model, lam):
    H = hamiltonian_observable(model).eval

    def h(q):
        return H(dc.as_array(np.concatenate([q, lam(q)])))

    return h


def closedness_matrix(model: Model, lam, q):
    """``d lambda(e_a, e_b)`` as a k x k matrix."""
    lam = as_one_form(model, lam)
    J = dc.jacobian(lam, q)
    e = model.d_frame(q)
    A = e.T @ J @ e
    return real(A.T - A)


def dD_lambda(model: Model, lam, q):
    """``d^D lambda(e_a, e_b) = e_a(lambda(e_b)) - e_b(lambda(e_a)) - lambda([e_a, e_b])``."""
    lam = as_one_form(model, lam)
    q = dc.as_array(q)
    k = model.k

    def pairing(s):
        return lam(s) @ model.d_frame(s)

    dpair = dc.jacobian(pairing, q)  # dpair[b, i] = d/dq^i lambda(e_b)
    e = model.d_frame(q)
    lq = lam(q)
    out = np.zeros((k, k))
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            br = lie_bracket(lambda s, a=a: model.d_frame(s)[:, a], lambda s, b=b: model.d_frame(s)[:, b], q)
            out[a, b] = real(e[:, a] @ dpair[b] - e[:, b] @ dpair[a] - lq @ br)
    return out


@dataclass(frozen=True)
class PointResiduals:
    q: np.ndarray
    membership: float
    closedness_D: float
    hj: float
    gen_hj_coords: float
    gen_hj_frame: float
    related: float

    @property
    def gen_hj(self) -> float:
        return max(self.gen_hj_coords, self.gen_hj_frame)


def point_residuals(model: Model, lam, q, related: bool = True) -> PointResiduals:
    lam = as_one_form(model, lam)
    q = np.asarray(q, dtype=float)
    model.check_point(q)
    n = model.n
    gam = gamma_matrix(model, q)
    lq, J = dc.value_and_jacobian(lam, q)  # J[l, k] = d lambda_l / d q^k
    dHl = dc.gradient(_H_of_lambda(model, lam), q)
    X = dc.solve_spd(metric_at(model, q), lq)
    iXdl = (J - J.T) @ X
    member = float(np.max(np.abs(lq - gam @ lq)))
    clos = float(np.max(np.abs(closedness_matrix(model, lam, q)))) if model.k > 1 else 0.0
    hj = float(np.max(np.abs(gam @ dHl)))
    gen_coords = float(np.max(np.abs(gam @ (dHl + iXdl))))
    # frame form: X = x^b e_b when lambda(q) lies in M
    e = model.d_frame(q)
    x, *_ = np.linalg.lstsq(e, X, rcond=None)
    dD = dD_lambda(model, lam, q)
    frame = e.T @ dHl + dD.T @ x
    gen_frame = float(np.max(np.abs(frame)))
    rel = float("nan")
    if related:
        lhs = np.concatenate([X, J @ X])
        rhs = real(nh_vf_projection(model, np.concatenate([q, lq]), check=False))
        rel = float(np.max(np.abs(lhs - rhs)))
    return PointResiduals(q, member, clos, hj, gen_coords, gen_frame, rel)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class HJReport:
    r_membership: float
    r_closedness_D: float
    r_hj: float
    r_gen_hj: float
    r_related: float
    grid: dict
    worst: dict = field(default_factory=dict)
    status: str = "ok"
    tol: float = TOL_HJ

    @property
    def classical_pass(self) -> bool:
        return max(self.r_membership, self.r_closedness_D, self.r_hj) <= self.tol

    @property
    def generalized_pass(self) -> bool:
        return max(self.r_membership, self.r_gen_hj, self.r_related) <= self.tol

    def as_dict(self) -> dict:
        return {
            "r_membership": self.r_membership,
            "r_closedness_D": self.r_closedness_D,
            "r_hj": self.r_hj,
            "r_gen_hj": self.r_gen_hj,
            "r_related": self.r_related,
            "tol": self.tol,
            "classical_pass": self.classical_pass,
            "generalized_pass": self.generalized_pass,
            "status": self.status,
            "worst": self.worst,
            "grid": self.grid,
        }


_FIELDS = {
    "r_membership": "membership",
    "r_closedness_D": "closedness_D",
    "r_hj": "hj",
    "r_gen_hj": "gen_hj",
    "r_related": "related",
}


def hj_report(model: Model, lam, grid: Grid, tol: float = TOL_HJ, related: bool = True) -> HJReport:
    """Every residual over the grid, with the grid point where each peaks."""
    lam = as_one_form(model, lam)
    best = {k: (-1.0, None) for k in _FIELDS}
    for q in grid.points():
        pr = point_residuals(model, lam, q, related)
        for key, attr in _FIELDS.items():
            v = getattr(pr, attr)
            if not math.isnan(v) and v > best[key][0]:
                best[key] = (v, q)
    vals = {k: max(v[0], 0.0) if v[1] is not None else float("nan") for k, v in best.items()}
    worst = {
        k: {c: float(x) for c, x in zip(model.coord_names, v[1])} for k, v in best.items() if v[1] is not None
    }
    status = "ok"
    if vals["r_membership"] > tol:
        status = "precondition violated: lambda does not take values in M"
    return HJReport(grid=grid.describe(), worst=worst, status=status, tol=tol, **vals)


def hj_residuals(model: Model, lam, grid: Grid, tol: float = TOL_HJ) -> HJReport:
    """Classical conditions only (``r_gen_hj`` and ``r_related`` included for free
    except relatedness, which is skipped)."""
    return hj_report(model, lam, grid, tol, related=False)


def gen_hj_residual(model: Model, lam, grid: Grid, tol: float = TOL_HJ) -> HJReport:
    return hj_report(model, lam, grid, tol, related=False)


def lambda_relatedness(model: Model, lam, grid: Grid) -> float:
    lam = as_one_form(model, lam)
    return max(point_residuals(model, lam, q).related for q in grid.points())


# ---------------------------------------------------------------------------
# One-forms from files


_FUNCS = {
    "sin": dc.sin,
    "cos": dc.cos,
    "tan": dc.tan,
    "exp": dc.exp,
    "log": dc.log,
    "sqrt": dc.sqrt,
    "arctan": dc.arctan,
    "sinh": dc.sinh,
    "cosh": dc.cosh,
    "tanh": dc.tanh,
}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def _compile_expr(src: str, names: set[str]):
    tree = ast.parse(src, mode="eval")

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name):
            if node.id not in names and node.id not in ("pi",):
                raise ValueError(f"unknown name {node.id!r} in {src!r}")
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
            if node.keywords or len(node.args) != 1:
                raise ValueError(f"{node.func.id} takes one argument")
            check(node.args[0])
        else:
            raise ValueError(f"unsupported syntax in {src!r}: {ast.dump(node)[:60]}")

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return math.pi if node.id == "pi" and "pi" not in env else env[node.id]
        return _FUNCS[node.func.id](ev(node.args[0], env))

    return lambda env: ev(tree, env)


def load_one_form(model: Model, path) -> OneFormField:
    """Read ``{"components": [expr, ...], "params": {name: value}}``.

    Expressions use the coordinate names, the parameters, ``pi``, the four
    arithmetic operators, ``**`` and the functions sin, cos, tan, exp, log,
    sqrt, arctan, sinh, cosh, tanh.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    comps = data.get("components")
    if not isinstance(comps, list) or len(comps) != model.n:
        raise ValueError(f"{path}: need a list of {model.n} component expressions")
    params = {k: float(v) for k, v in data.get("params", {}).items()}
    names = set(model.coord_names) | set(params)
    fns = [_compile_expr(str(c), names) for c in comps]

    def lam(q):
        env = dict(params)
        env.update(zip(model.coord_names, q))
        out = np.empty(model.n, dtype=object)
        for i, f in enumerate(fns):
            out[i] = f(env)
        return out

    return OneFormField(SmoothMap(model.n, model.n, lam), data.get("label", Path(path).stem))
