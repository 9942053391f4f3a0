"""Nonlinear least squares: model catalog, start heuristics and a Levenberg-Marquardt solver."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .expressions import compile_expression
from .validation import check_1d_predictor, check_vector

__all__ = [
    "NlsModel",
    "NlsFit",
    "HeuristicWarning",
    "builtin_catalog",
    "register_model",
    "unregister_model",
    "get_model",
    "registered_models",
    "model_from_expression",
    "load_models",
    "numeric_jacobian",
    "start_heuristics",
    "fit_nls",
    "NonlinearRegressor",
]


class HeuristicWarning(UserWarning):
    """A start heuristic could not be applied and fell back to all ones."""


@dataclass(frozen=True)
class NlsModel:
    id: str
    arity: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    start: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    domain_note: str = ""
    formula: str = ""
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None

    def bounds(self):
        """``(lower, upper)`` arrays; infinite where the parameter is free."""
        lo = np.full(self.arity, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        hi = np.full(self.arity, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        return lo, hi

    def __call__(self, x, beta):
        return self.f(np.asarray(x, dtype=float), np.asarray(beta, dtype=float))

    def jac(self, x, beta):
        x = np.asarray(x, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if self.jacobian is not None:
            return self.jacobian(x, beta)
        return numeric_jacobian(self.f, x, beta)


@dataclass
class NlsFit:
    model_id: str
    beta_hat: np.ndarray
    sse: float
    fitted: np.ndarray
    iterations: int
    converged: bool
    beta0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sse0: float = np.nan


def numeric_jacobian(f, x, beta, rel_step=1e-6):
    """Central-difference Jacobian of ``f(x, beta)`` with respect to ``beta``."""
    beta = np.asarray(beta, dtype=float)
    cols = []
    for k in range(len(beta)):
        h = rel_step * max(1.0, abs(beta[k]))
        up, dn = beta.copy(), beta.copy()
        up[k] += h
        dn[k] -= h
        cols.append((f(x, up) - f(x, dn)) / (2 * h))
    return np.column_stack(cols)


# --- builtin models -------------------------------------------------------


def _f1(x, b):
    with np.errstate(over="ignore"):
        return b[0] / (b[1] + np.exp(b[2] * x))


def _f1_jac(x, b):
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(b[2] * x)
        D = b[1] + e
        return np.column_stack([1.0 / D, -b[0] / D**2, -b[0] * x * e / D**2])


def _f2(x, b):
    with np.errstate(over="ignore"):
        return b[0] + np.exp(-b[1] * x)


def _f2_jac(x, b):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.column_stack([np.ones_like(x), -x * np.exp(-b[1] * x)])


def _f3(x, b):
    return b[1] * x / (b[0] + x)


def _f3_jac(x, b):
    D = b[0] + x
    return np.column_stack([-b[1] * x / D**2, x / D])


def _f4(x, b):
    return b[0] * np.cos(2 * x) + b[1] * np.sin(x)


def _f4_jac(x, b):
    return np.column_stack([np.cos(2 * x), np.sin(x)])


def _f24(x, b):
    return 1.0 / (b[0] + b[1] * x)


def _f24_jac(x, b):
    D = b[0] + b[1] * x
    return np.column_stack([-1.0 / D**2, -x / D**2])


def _binned_means(x, y, bins=8):
    """Means of ``(x, y)`` over ``bins`` groups of consecutive sorted ``x``."""
    order = np.argsort(x, kind="stable")
    groups = np.array_split(order, min(bins, len(x)))
    xb = np.array([x[g].mean() for g in groups if len(g)])
    yb = np.array([y[g].mean() for g in groups if len(g)])
    return xb, yb


def _crossing(xb, yb, level):
    """x where the binned curve first crosses ``level`` (linear interpolation)."""
    s = yb - level
    for i in range(len(s) - 1):
        if s[i] == 0:
            return xb[i]
        if s[i] * s[i + 1] < 0:
            return xb[i] + (xb[i + 1] - xb[i]) * s[i] / (s[i] - s[i + 1])
    return xb[np.argmin(np.abs(s))]


def _start_f1(x, y):
    # logistic: plateau A on one side, 0 on the other, quartile crossings give the rate
    xb, yb = _binned_means(x, y, bins=min(16, max(4, len(x) // 8)))
    left, right = yb[0], yb[-1]
    if abs(left) >= abs(right):
        A, sign = left, 1.0
    else:
        A, sign = right, -1.0
    if A == 0:
        raise ValueError("flat response")
    x_mid = _crossing(xb, yb, A / 2)
    width = abs(_crossing(xb, yb, 0.25 * A) - _crossing(xb, yb, 0.75 * A))
    if width <= 0:
        width = (xb[-1] - xb[0]) / 4
    rate = sign * 2 * np.log(3.0) / width
    b2 = np.exp(np.clip(rate * x_mid, -50, 50))
    return np.array([A * b2, b2, rate])


def _start_f2(x, y):
    # b1 just below min(y), then log(y - b1) = -b2 x through the origin; compared
    # against a profile grid over b2 (b1 is then the mean residual) and the
    # lower-SSE start wins, since noisy minima make the first guess unreliable
    span = y.max() - y.min()
    b1 = y.min() - (0.05 * span if span > 0 else 1e-3)
    z = np.log(y - b1)
    b2 = -float(np.dot(x, z) / np.dot(x, x)) if np.dot(x, x) > 0 else 0.0
    starts = [np.array([b1, b2])]
    scale = max(float(np.ptp(x)), 1e-12)
    for rate in np.linspace(-3.0, 6.0, 37) / scale:
        with np.errstate(over="ignore"):
            e = np.exp(-rate * x)
        if np.all(np.isfinite(e)):
            starts.append(np.array([float(np.mean(y - e)), rate]))
    sse = [float(np.sum((y - _f2(x, b)) ** 2)) for b in starts]
    return starts[int(np.nanargmin(sse))]


def _start_f3(x, y):
    xb, yb = _binned_means(x, y)
    b2 = float(y.max())
    b1 = float(_crossing(xb, yb, b2 / 2))
    if b1 <= 0:
        b1 = float(np.median(x))
    return np.array([b1, b2])


def _start_f4(x, y):
    A = np.column_stack([np.cos(2 * x), np.sin(x)])
    return np.linalg.lstsq(A, y, rcond=None)[0]


def _start_f24(x, y):
    # OLS of 1/y on x over binned means, which must stay away from zero
    xb, yb = _binned_means(x, y)
    if np.all(yb > 0) or np.all(yb < 0):
        A = np.column_stack([np.ones_like(xb), xb])
        return np.linalg.lstsq(A, 1.0 / yb, rcond=None)[0]
    raise ValueError("binned response changes sign")


_BUILTINS = (
    NlsModel(
        "f1", 3, _f1, _f1_jac, _start_f1, "any x; b2 >= 0 keeps the denominator positive (a logistic curve)",
        "b1/(b2+exp(b3*x))", lower=(-np.inf, 0.0, -np.inf),
    ),
    NlsModel("f2", 2, _f2, _f2_jac, _start_f2, "any x", "b1+exp(-b2*x)"),
    NlsModel("f3", 2, _f3, _f3_jac, _start_f3, "x != -b1", "b2*x/(b1+x)"),
    NlsModel("f4", 2, _f4, _f4_jac, _start_f4, "any x", "b1*cos(2*x)+b2*sin(x)"),
    NlsModel("f24", 2, _f24, _f24_jac, _start_f24, "b1 + b2 x != 0", "1/(b1+b2*x)"),
)

_REGISTRY: dict[str, NlsModel] = {m.id: m for m in _BUILTINS}


def builtin_catalog() -> list[NlsModel]:
    return list(_BUILTINS)


def registered_models() -> list[NlsModel]:
    return list(_REGISTRY.values())


def register_model(model: NlsModel, replace: bool = False) -> NlsModel:
    if model.id in _REGISTRY and not replace:
        raise ValueError(f"model {model.id!r} is already registered")
    _REGISTRY[model.id] = model
    return model


def unregister_model(model_id: str) -> None:
    if any(m.id == model_id for m in _BUILTINS):
        raise ValueError(f"cannot remove builtin model {model_id!r}")
    _REGISTRY.pop(model_id, None)


def get_model(model) -> NlsModel:
    if isinstance(model, NlsModel):
        return model
    try:
        return _REGISTRY[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; registered: {sorted(_REGISTRY)}") from None


def model_from_expression(model_id: str, formula: str, start=None, domain_note="") -> NlsModel:
    """Build an :class:`NlsModel` from a formula string (finite-difference Jacobian).

    ``start`` is a fixed start vector; without it the start is all ones.
    """
    expr = compile_expression(formula)
    start_fn = None
    if start is not None:
        start = np.asarray(start, dtype=float)
        if len(start) != expr.arity:
            raise ValueError(f"{model_id}: start has {len(start)} values, formula needs {expr.arity}")
        start_fn = lambda x, y, _s=start: _s.copy()  # noqa: E731
    return NlsModel(model_id, expr.arity, expr, None, start_fn, domain_note, formula)


def load_models(path, register: bool = False) -> list[NlsModel]:
    """Read expression-defined models from a YAML/JSON file.

    Accepted layouts::

        models:
          - {id: f5, expr: "b1*x/(b2+x)", start: [1, 1]}

    or a plain mapping ``f5: "b1*x/(b2+x)"``.
    """
    import yaml

    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if isinstance(doc, dict) and "models" in doc:
        entries = doc["models"]
    elif isinstance(doc, dict):
        entries = [{"id": k, "expr": v} for k, v in doc.items()]
    else:
        entries = doc
    if not isinstance(entries, list):
        raise ValueError(f"{path}: expected a list of models")
    models = []
    for e in entries:
        if not isinstance(e, dict) or "id" not in e or "expr" not in e:
            raise ValueError(f"{path}: each model needs 'id' and 'expr', got {e!r}")
        m = model_from_expression(str(e["id"]), str(e["expr"]), e.get("start"), e.get("domain", ""))
        if register:
            register_model(m, replace=True)
        models.append(m)
    return models


def start_heuristics(model, x, y) -> np.ndarray:
    """Deterministic start vector for ``model`` on data ``(x, y)``.

    Falls back to all ones (with a :class:`HeuristicWarning`) when the model's
    heuristic is undefined for the data.
    """
    model = get_model(model)
    x = check_vector(x, "x")
    y = check_vector(y, "y")
    if len(x) == 0:
        raise ValueError("start heuristics need data")
    if model.start is not None:
        try:
            with np.errstate(all="ignore"):
                beta0 = np.asarray(model.start(x, y), dtype=float)
            if beta0.shape == (model.arity,) and np.all(np.isfinite(beta0)):
                return beta0
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            pass
    warnings.warn(f"start heuristic for {model.id} undefined on this data; using ones", HeuristicWarning, stacklevel=2)
    return np.ones(model.arity)


def _sse(model, x, y, beta):
    with np.errstate(all="ignore"):
        r = y - model.f(x, beta)
    s = float(np.dot(r, r))
    return (s, r) if np.isfinite(s) else (np.inf, r)


def fit_nls(
    model,
    x,
    y,
    beta0="auto",
    max_iter: int = 200,
    ftol: float = 1e-10,
    gtol: float = 1e-8,
    lam0: float = 1e-3,
    lam_max: float = 1e16,
) -> NlsFit:
    """Levenberg-Marquardt minimization of the residual sum of squares.

    Damping starts at ``lam0``, is divided by 10 after an accepted step and
    multiplied by 10 after a rejected one.  Only downhill steps are accepted.
    Models with parameter bounds get projected steps; a parameter held at a
    bound by the gradient is frozen for that iteration.
    """
    model = get_model(model)
    x = check_vector(x, "x")
    y = check_vector(y, "y")
    if len(x) != len(y):
        raise ValueError(f"x and y differ in length ({len(x)} != {len(y)})")
    if len(y) <= model.arity:
        raise ValueError(f"{model.id} has {model.arity} parameters; need more than {model.arity} points")
    beta = start_heuristics(model, x, y) if isinstance(beta0, str) and beta0 == "auto" else np.array(beta0, dtype=float)
    if beta.shape != (model.arity,) or not np.all(np.isfinite(beta)):
        raise ValueError(f"{model.id}: start must be {model.arity} finite values, got {beta}")
    lo, hi = model.bounds()
    beta = np.clip(beta, lo, hi)
    start = beta.copy()
    sse, r = _sse(model, x, y, beta)
    if not np.isfinite(sse):
        raise ValueError(f"{model.id} is not finite at the start {beta}; supply an explicit start")
    sse0 = sse

    lam = lam0
    converged = False
    it = 0
    J = model.jac(x, beta)
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(J)):
            break
        g = J.T @ r
        free = ~(((beta <= lo) & (g < 0)) | ((beta >= hi) & (g > 0)))
        if not free.any() or np.max(np.abs(g[free])) < gtol:
            converged = True
            break
        A = (J.T @ J)[np.ix_(free, free)]
        g = g[free]
        d = np.diag(A).copy()
        d[d <= 0] = max(d.max(), 1.0) * 1e-12
        accepted = False
        while lam <= lam_max:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = beta.copy()
            trial[free] += step
            trial = np.clip(trial, lo, hi)
            sse_new, r_new = _sse(model, x, y, trial)
            if sse_new < sse:
                accepted = True
                break
            if np.isfinite(sse_new) and abs(sse_new - sse) <= ftol * max(sse, np.finfo(float).tiny):
                # no further decrease possible at machine precision
                converged = True
                break
            lam *= 10
        if converged or not accepted:
            break
        rel = (sse - sse_new) / max(sse, np.finfo(float).tiny)
        beta, sse, r = trial, sse_new, r_new
        lam = max(lam / 10, 1e-15)
        J = model.jac(x, beta)
        if rel < ftol or sse == 0.0:
            converged = True
            break

    with np.errstate(all="ignore"):
        fitted = model.f(x, beta)
    return NlsFit(model.id, beta, sse, fitted, it, converged, start, sse0)


class NonlinearRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of one catalog model ``y = f(x, beta) + error``.

    Parameters
    ----------
    model : str or NlsModel, default="f1"
        Registered model id or a model instance.
    beta0 : "auto" or array-like, default="auto"
    max_iter : int, default=200
    """

    def __init__(self, model="f1", beta0="auto", max_iter=200):
        self.model = model
        self.beta0 = beta0
        self.max_iter = max_iter

    def fit(self, X, y):
        x, y = check_1d_predictor(X, y)
        self.model_ = get_model(self.model)
        self.fit_ = fit_nls(self.model_, x, y, self.beta0, max_iter=self.max_iter)
        self.coef_ = self.fit_.beta_hat
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        x, _ = check_1d_predictor(X)
        return self.model_(x, self.coef_)
