"""Forward-mode differentiation on nested dual numbers.

Every derivative the engine needs (Jacobians of frames, metrics, one-forms,
observables) goes through this module. The default mode propagates exact
first derivatives with :class:`Dual`; a central-difference mode is kept as an
independent cross-check.

Duals carry a tag. When two duals with different tags meet, the one created
later (larger tag) sits on top and treats the other as a constant. That is
what makes nested differentiation (a derivative of a function that itself
takes derivatives) correct.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

_tags = itertools.count(1)

EPS = np.finfo(float).eps


class DimensionError(ValueError):
    pass


class EvaluationError(ArithmeticError):
    pass


class Dual:
    """A scalar ``val + eps . dq`` with a tangent vector ``eps``.

    Python never tries the reflected operator when both operands share a
    type, so a higher-tagged right operand is delegated to explicitly.

    ``val`` may itself be a :class:`Dual` of lower tag; ``eps`` is a numpy
    array, of object dtype when it holds lower-tag duals.
    """

    __slots__ = ("val", "eps", "tag")

    def __init__(self, val, eps, tag):
        self.val = val
        self.eps = eps
        self.tag = tag

    # arithmetic -----------------------------------------------------------
    def __add__(self, o):
        if type(o) is Dual:
            if o.tag == self.tag:
                return Dual(self.val + o.val, self.eps + o.eps, self.tag)
            if o.tag > self.tag:
                return o.__radd__(self)
        elif isinstance(o, np.ndarray):
            return NotImplemented
        return Dual(self.val + o, self.eps, self.tag)

    def __radd__(self, o):
        return Dual(o + self.val, self.eps, self.tag)

    def __sub__(self, o):
        if type(o) is Dual:
            if o.tag == self.tag:
                return Dual(self.val - o.val, self.eps - o.eps, self.tag)
            if o.tag > self.tag:
                return o.__rsub__(self)
        elif isinstance(o, np.ndarray):
            return NotImplemented
        return Dual(self.val - o, self.eps, self.tag)

    def __rsub__(self, o):
        return Dual(o - self.val, -self.eps, self.tag)

    def __mul__(self, o):
        if type(o) is Dual:
            if o.tag == self.tag:
                return Dual(self.val * o.val, self.val * o.eps + o.val * self.eps, self.tag)
            if o.tag > self.tag:
                return o.__rmul__(self)
        elif isinstance(o, np.ndarray):
            return NotImplemented
        return Dual(self.val * o, self.eps * o, self.tag)

    def __rmul__(self, o):
        return Dual(o * self.val, o * self.eps, self.tag)

    def __truediv__(self, o):
        if type(o) is Dual:
            if o.tag == self.tag:
                quot = self.val / o.val
                return Dual(quot, (self.eps - quot * o.eps) / o.val, self.tag)
            if o.tag > self.tag:
                return o.__rtruediv__(self)
        elif isinstance(o, np.ndarray):
            return NotImplemented
        return Dual(self.val / o, self.eps / o, self.tag)

    def __rtruediv__(self, o):
        quot = o / self.val
        return Dual(quot, -quot * self.eps / self.val, self.tag)

    def __pow__(self, o):
        if type(o) is Dual:
            if o.tag > self.tag:
                return o.__rpow__(self)
            return exp(o * log(self))
        if isinstance(o, np.ndarray):
            return NotImplemented
        if o == 2:
            return self * self
        return Dual(self.val**o, (o * self.val ** (o - 1)) * self.eps, self.tag)

    def __rpow__(self, o):
        return exp(self * log(o))

    def __neg__(self):
        return Dual(-self.val, -self.eps, self.tag)

    def __pos__(self):
        return self

    def __abs__(self):
        return -self if real(self) < 0 else self

    # comparisons act on the real part ----------------------------------------
    def __lt__(self, o):
        return real(self) < real(o)

    def __le__(self, o):
        return real(self) <= real(o)

    def __gt__(self, o):
        return real(self) > real(o)

    def __ge__(self, o):
        return real(self) >= real(o)

    def __float__(self):
        raise TypeError("cannot convert a Dual to float; use diffcore.real()")

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    # numpy calls these by name for object arrays ------------------------------
    def sin(self):
        return Dual(sin(self.val), cos(self.val) * self.eps, self.tag)

    def cos(self):
        return Dual(cos(self.val), -sin(self.val) * self.eps, self.tag)

    def tan(self):
        t = tan(self.val)
        return Dual(t, (1 + t * t) * self.eps, self.tag)

    def exp(self):
        e = exp(self.val)
        return Dual(e, e * self.eps, self.tag)

    def log(self):
        return Dual(log(self.val), self.eps / self.val, self.tag)

    def sqrt(self):
        s = sqrt(self.val)
        return Dual(s, self.eps / (2 * s), self.tag)

    def arctan(self):
        return Dual(arctan(self.val), self.eps / (1 + self.val * self.val), self.tag)

    def arcsin(self):
        return Dual(arcsin(self.val), self.eps / sqrt(1 - self.val * self.val), self.tag)

    def arccos(self):
        return Dual(arccos(self.val), -self.eps / sqrt(1 - self.val * self.val), self.tag)

    def sinh(self):
        return Dual(sinh(self.val), cosh(self.val) * self.eps, self.tag)

    def cosh(self):
        return Dual(cosh(self.val), sinh(self.val) * self.eps, self.tag)

    def tanh(self):
        t = tanh(self.val)
        return Dual(t, (1 - t * t) * self.eps, self.tag)


def _elementwise(ufunc, name):
    def fn(x):
        if isinstance(x, np.ndarray) and x.dtype == object:
            out = np.empty(x.shape, dtype=object)
            for idx, v in np.ndenumerate(x):
                out[idx] = getattr(v, name)() if type(v) is Dual else ufunc(v)
            return out
        return ufunc(x)

    fn.__name__ = name
    fn.__doc__ = f"``numpy.{name}`` that also accepts duals and object arrays."
    return fn


sin = _elementwise(np.sin, "sin")
cos = _elementwise(np.cos, "cos")
tan = _elementwise(np.tan, "tan")
exp = _elementwise(np.exp, "exp")
log = _elementwise(np.log, "log")
sqrt = _elementwise(np.sqrt, "sqrt")
arctan = _elementwise(np.arctan, "arctan")
arcsin = _elementwise(np.arcsin, "arcsin")
arccos = _elementwise(np.arccos, "arccos")
sinh = _elementwise(np.sinh, "sinh")
cosh = _elementwise(np.cosh, "cosh")
tanh = _elementwise(np.tanh, "tanh")


def real(x):
    """Strip every dual layer, returning floats (or a float array)."""
    while type(x) is Dual:
        x = x.val
    if isinstance(x, np.ndarray) and x.dtype == object:
        return np.array([real(v) for v in x.flat], dtype=float).reshape(x.shape)
    return x


def is_dual(x) -> bool:
    if type(x) is Dual:
        return True
    return isinstance(x, np.ndarray) and x.dtype == object


def as_array(x):
    """``np.asarray`` that keeps duals (object dtype) and floats otherwise."""
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            return _maybe_float(x)
        return x.astype(float, copy=False)
    arr = np.asarray(x, dtype=object)
    return _maybe_float(arr)


def _maybe_float(a: np.ndarray) -> np.ndarray:
    if a.dtype != object:
        return a
    for v in a.flat:
        if type(v) is Dual:
            return a
    return a.astype(float)


# ---------------------------------------------------------------------------
# Linear algebra that works for float and dual-valued arrays.


def solve(A, b):
    """Solve ``A x = b``; Gaussian elimination with partial pivoting for duals."""
    A = as_array(A)
    b = as_array(b)
    n = A.shape[0]
    if n == 0:
        return b.copy()
    if A.dtype != object and b.dtype != object:
        return np.linalg.solve(A, b)
    fast = _solve_first_order(A, b)
    if fast is not None:
        return fast
    vector = b.ndim == 1
    M = A.astype(object)
    B = b.astype(object).reshape(n, -1)
    Mr = real(M).copy()
    scale = np.max(np.abs(Mr)) if Mr.size else 1.0
    for c in range(n):
        piv = c + int(np.argmax(np.abs(Mr[c:, c])))
        if abs(Mr[piv, c]) <= 1e-14 * scale:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != c:
            M[[c, piv]] = M[[piv, c]]
            B[[c, piv]] = B[[piv, c]]
            Mr[[c, piv]] = Mr[[piv, c]]
        for r in range(c + 1, n):
            if Mr[r, c] == 0.0 and not is_dual(M[r, c]):
                continue
            f = M[r, c] / M[c, c]
            M[r, c + 1 :] = M[r, c + 1 :] - f * M[c, c + 1 :]
            B[r] = B[r] - f * B[c]
            Mr[r, c + 1 :] = real(M[r, c + 1 :])
    X = np.empty_like(B)
    for r in range(n - 1, -1, -1):
        acc = B[r]
        if r + 1 < n:
            acc = acc - M[r, r + 1 :] @ X[r + 1 :]
        X[r] = acc / M[r, r]
    X = _maybe_float(X)
    return X[:, 0] if vector else X


def _unpack(a: np.ndarray):
    """``(values, tangents, tag)`` if every entry is a float or a one-level
    dual of a single tag; ``None`` otherwise."""
    tag = None
    width = None
    for v in a.flat:
        if type(v) is Dual:
            if type(v.val) is Dual or v.eps.dtype == object:
                return None
            if tag is None:
                tag, width = v.tag, v.eps.size
            elif v.tag != tag:
                return None
    vals = np.empty(a.size)
    tans = np.zeros((a.size, width or 0))
    for i, v in enumerate(a.flat):
        if type(v) is Dual:
            vals[i] = v.val
            tans[i] = v.eps
        else:
            vals[i] = v
    return vals.reshape(a.shape), tans.reshape(a.shape + (width or 0,)), tag


def _solve_first_order(A, b):
    """Vectorised solve for first-order duals: ``A0 x0 = b0`` and
    ``A0 dx = db - dA x0`` for every tangent direction."""
    ua = _unpack(A) if A.dtype == object else (A, None, None)
    ub = _unpack(b) if b.dtype == object else (b, None, None)
    if ua is None or ub is None:
        return None
    (A0, dA, ta), (b0, db, tb) = ua, ub
    if ta is not None and tb is not None and ta != tb:
        return None
    tag = ta if ta is not None else tb
    width = (dA if dA is not None else db).shape[-1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(A0, check_finite=False)
    if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * max(1.0, float(np.max(np.abs(A0))))):
        raise np.linalg.LinAlgError("singular matrix")
    x0 = scipy.linalg.lu_solve(lu, b0, check_finite=False)
    rhs = np.zeros(b0.shape + (width,)) if db is None else db.copy()
    if dA is not None:
        rhs = rhs - np.einsum("ijw,j...->i...w", dA, x0)
    dx = scipy.linalg.lu_solve(lu, rhs.reshape(b0.shape[0], -1), check_finite=False).reshape(rhs.shape)
    out = np.empty(x0.shape, dtype=object)
    for idx in np.ndindex(x0.shape):
        out[idx] = Dual(float(x0[idx]), dx[idx], tag)
    return out


def solve_spd(A, b):
    """Solve with a symmetric positive-definite ``A`` (Cholesky for floats)."""
    A = as_array(A)
    b = as_array(b)
    if A.dtype != object and b.dtype != object:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), b)
    return solve(A, b)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothMap:
    """A smooth coordinate expression ``R^n -> R^m``.

    ``shape`` reshapes the output (e.g. ``(n, n)`` for a metric); its size
    must equal ``codomain_dim``.
    """

    domain_dim: int
    codomain_dim: int
    eval: Callable
    shape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.shape is not None and int(np.prod(self.shape)) != self.codomain_dim:
            raise DimensionError(f"shape {self.shape} does not hold {self.codomain_dim} values")

    def __call__(self, q):
        if len(q) != self.domain_dim:
            raise DimensionError(f"expected a point of dimension {self.domain_dim}, got {len(q)}")
        out = as_array(self.eval(q))
        if out.size != self.codomain_dim:
            raise DimensionError(f"map returned {out.size} values, expected {self.codomain_dim}")
        if self.shape == ():
            return out.reshape(-1)[0]
        return out.reshape(self.shape) if self.shape is not None else out.reshape(-1)


@dataclass(frozen=True)
class DiffConfig:
    mode: str = "dual"
    fd_step: float | None = None
    tol_cross: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("dual", "central-difference"):
            raise ValueError(f"unknown differentiation mode {self.mode!r}")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if not self.tol_cross > 0:
            raise ValueError("tol_cross must be positive")


DEFAULT = DiffConfig()
_config_stack: list[DiffConfig] = [DEFAULT]


def current_config() -> DiffConfig:
    return _config_stack[-1]


class using:
    """Context manager switching the default :class:`DiffConfig`.

    >>> with using(DiffConfig(mode="central-difference")):
    ...     pass
    """

    def __init__(self, config: DiffConfig):
        self.config = config

    def __enter__(self):
        _config_stack.append(self.config)
        return self.config

    def __exit__(self, *exc):
        _config_stack.pop()


def _seed(q, directions, tag):
    x = np.empty(len(q), dtype=object)
    for i, qi in enumerate(q):
        x[i] = Dual(qi, directions[i], tag)
    return x


def _extract(y, tag, width):
    """Split an output of duals into (value, tangent rows)."""
    ys = np.asarray(y, dtype=object)
    shape = ys.shape
    vals = np.empty(ys.size, dtype=object)
    rows = np.empty((ys.size, width), dtype=object)
    for r, v in enumerate(ys.flat):
        if type(v) is Dual and v.tag == tag:
            vals[r] = v.val
            rows[r] = v.eps
        else:
            vals[r] = v
            rows[r] = 0.0
    return _maybe_float(vals).reshape(shape), _maybe_float(rows).reshape(shape + (width,))


def _fd_steps(q, power):
    base = EPS**power
    return np.array([base * max(1.0, abs(real(qi))) for qi in q])


def _safe_eval(f, x):
    try:
        return as_array(f(x))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise EvaluationError(f"evaluation failed at a shifted point: {exc}") from exc


def value_and_jacobian(f, q, config: DiffConfig | None = None):
    """Return ``(f(q), J)`` with ``J[..., s] = d f[...] / d q^s``."""
    config = config or current_config()
    q = as_array(q)
    n = q.size
    if config.mode == "dual":
        tag = next(_tags)
        return _extract(f(_seed(q, np.eye(n), tag)), tag, n)
    y0 = as_array(f(q))
    steps = _fd_steps(q, 1 / 3) if config.fd_step is None else np.full(n, config.fd_step)
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = steps[i]
        cols.append((_safe_eval(f, q + e) - _safe_eval(f, q - e)) / (2 * steps[i]))
    return y0, _maybe_float(np.stack(cols, axis=-1))


def jacobian(f, q, config: DiffConfig | None = None):
    """Dense ``m x n`` Jacobian of ``f`` at ``q`` (scalar ``f`` gives ``1 x n``)."""
    y, J = value_and_jacobian(f, q, config)
    if np.ndim(y) == 0:
        return J.reshape(1, -1)
    return J.reshape(-1, J.shape[-1]) if np.ndim(y) > 1 else J


def gradient(f, q, config: DiffConfig | None = None):
    """Gradient of a scalar function."""
    y, J = value_and_jacobian(f, q, config)
    if np.ndim(y) != 0 and np.size(y) != 1:
        raise DimensionError("gradient needs a scalar-valued function")
    return J.reshape(-1)


def directional_derivative(f, q, v, config: DiffConfig | None = None):
    """``J_f(q) v`` from a single forward pass."""
    config = config or current_config()
    q = as_array(q)
    v = as_array(v)
    if v.size != q.size:
        raise DimensionError("direction and point differ in dimension")
    if config.mode == "dual":
        tag = next(_tags)
        _, rows = _extract(f(_seed(q, v.reshape(-1, 1), tag)), tag, 1)
        return rows[..., 0]
    scale = float(np.max(np.abs(real(v)))) if v.size else 0.0
    if scale == 0.0:
        return as_array(f(q)) * 0.0
    h = (config.fd_step or EPS ** (1 / 3) * max(1.0, float(np.max(np.abs(real(q)))))) / scale
    return (_safe_eval(f, q + h * v) - _safe_eval(f, q - h * v)) / (2 * h)


def second_derivative(f, q, config: DiffConfig | None = None):
    """Hessian of a scalar function (nested duals, or central differences)."""
    config = config or current_config()
    q = as_array(q)
    n = q.size
    if config.mode == "dual":
        return jacobian(lambda x: gradient(f, x, config), q, config)
    steps = _fd_steps(q, 1 / 4) if config.fd_step is None else np.full(n, config.fd_step)
    H = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = steps[i]
            ej[j] = steps[j]
            val = (
                _safe_eval(f, q + ei + ej)
                - _safe_eval(f, q + ei - ej)
                - _safe_eval(f, q - ei + ej)
                + _safe_eval(f, q - ei - ej)
            ) / (4 * steps[i] * steps[j])
            H[i, j] = H[j, i] = val.reshape(()).item() if np.ndim(val) else val
    return _maybe_float(H)


def cross_check(f, q, scale: float | None = None, config: DiffConfig | None = None) -> float:
    """Largest entrywise gap between dual and central-difference Jacobians,
    divided by ``max(1, scale)`` (``scale`` defaults to the largest entry)."""
    config = config or current_config()
    Jd = real(jacobian(f, q, DiffConfig("dual", tol_cross=config.tol_cross)))
    Jf = real(jacobian(f, q, DiffConfig("central-difference", config.fd_step, config.tol_cross)))
    if scale is None:
        scale = float(np.max(np.abs(Jd))) if Jd.size else 1.0
    return float(np.max(np.abs(Jd - Jf))) / max(1.0, scale) if Jd.size else 0.0


__all__ = [
    "DiffConfig",
    "DimensionError",
    "Dual",
    "EvaluationError",
    "SmoothMap",
    "as_array",
    "cross_check",
    "current_config",
    "directional_derivative",
    "gradient",
    "jacobian",
    "real",
    "second_derivative",
    "solve",
    "solve_spd",
    "using",
    "value_and_jacobian",
]

