"""Generalized linear models for continuous responses, fitted by IRLS.

Families: gaussian, gamma, inverse_gaussian.
Links: identity, log, inverse, inverse_squared (``1/mu**2``).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .validation import check_full_rank, check_vector

__all__ = [
    "ExponentialFamily",
    "LinkSpec",
    "GlmFit",
    "FAMILIES",
    "LINKS",
    "get_family",
    "get_link",
    "deviance",
    "fit_glm",
    "predict_glm",
    "GLMRegressor",
]

log = logging.getLogger(__name__)

MU_FLOOR = 1e-8
MAX_HALVINGS = 20


@dataclass(frozen=True)
class ExponentialFamily:
    name: str
    variance: Callable[[np.ndarray], np.ndarray]
    canonical_link: str
    unit_deviance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    positive: bool

    def valid_mu(self, mu):
        mu = np.asarray(mu, dtype=float)
        ok = np.isfinite(mu)
        return ok & (mu > 0) if self.positive else ok

    def valid_y(self, y):
        y = np.asarray(y, dtype=float)
        return np.isfinite(y) & (y > 0) if self.positive else np.isfinite(y)


@dataclass(frozen=True)
class LinkSpec:
    name: str
    g: Callable[[np.ndarray], np.ndarray]
    g_inverse: Callable[[np.ndarray], np.ndarray]
    g_prime: Callable[[np.ndarray], np.ndarray]
    valid_eta: Callable[[np.ndarray], np.ndarray]


def _gamma_unit(y, mu):
    q = (y - mu) / mu
    return np.maximum(2.0 * (q - np.log1p(q)), 0.0)


def _ig_unit(y, mu):
    return (y - mu) ** 2 / (mu**2 * y)


FAMILIES = {
    "gaussian": ExponentialFamily(
        "gaussian", lambda mu: np.ones_like(mu), "identity", lambda y, mu: (y - mu) ** 2, False
    ),
    "gamma": ExponentialFamily("gamma", lambda mu: mu**2, "inverse", _gamma_unit, True),
    "inverse_gaussian": ExponentialFamily(
        "inverse_gaussian", lambda mu: mu**3, "inverse_squared", _ig_unit, True
    ),
}

LINKS = {
    "identity": LinkSpec(
        "identity",
        lambda mu: mu,
        lambda eta: eta,
        lambda mu: np.ones_like(mu),
        lambda eta: np.isfinite(eta),
    ),
    "log": LinkSpec(
        "log",
        np.log,
        np.exp,
        lambda mu: 1.0 / mu,
        lambda eta: np.isfinite(eta) & (eta < 700.0),
    ),
    "inverse": LinkSpec(
        "inverse",
        lambda mu: 1.0 / mu,
        lambda eta: 1.0 / eta,
        lambda mu: -1.0 / mu**2,
        lambda eta: np.isfinite(eta) & (eta != 0.0),
    ),
    "inverse_squared": LinkSpec(
        "inverse_squared",
        lambda mu: mu**-2.0,
        lambda eta: eta**-0.5,
        lambda mu: -2.0 / mu**3,
        lambda eta: np.isfinite(eta) & (eta > 0.0),
    ),
}

_LINK_ALIASES = {"1/mu^2": "inverse_squared", "1/mu2": "inverse_squared", "inv_sq": "inverse_squared"}
_FAMILY_ALIASES = {"normal": "gaussian", "inverse-gaussian": "inverse_gaussian", "ig": "inverse_gaussian"}


def get_family(family) -> ExponentialFamily:
    if isinstance(family, ExponentialFamily):
        return family
    key = _FAMILY_ALIASES.get(str(family).lower(), str(family).lower())
    try:
        return FAMILIES[key]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None


def get_link(link) -> LinkSpec:
    if isinstance(link, LinkSpec):
        return link
    key = _LINK_ALIASES.get(str(link).lower(), str(link).lower())
    try:
        return LINKS[key]
    except KeyError:
        raise ValueError(f"unknown link {link!r}; choose from {sorted(LINKS)}") from None


@dataclass
class GlmFit:
    beta: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    deviance: float
    dispersion: float
    iterations: int
    converged: bool
    family: str
    link: str
    clipped: bool = False
    deviance_path: list = field(default_factory=list)

    @property
    def fitted(self):
        return self.mu


def deviance(family, y, mu) -> float:
    """Sum of the family's unit deviances."""
    fam = get_family(family)
    y = check_vector(y, "y")
    mu = check_vector(mu, "mu")
    if len(y) != len(mu):
        raise ValueError(f"y and mu differ in length ({len(y)} != {len(mu)})")
    if not (fam.valid_y(y).all() and fam.valid_mu(mu).all()):
        raise ValueError(f"values outside the {fam.name} domain")
    return float(np.sum(fam.unit_deviance(y, mu)))


def _start_mu(y, fam, link):
    mu = y.astype(float).copy()
    if fam.positive or link.name in ("log", "inverse_squared"):
        floor = 0.1 * abs(np.mean(y)) if np.mean(y) != 0 else 0.1
        mu = np.maximum(mu, floor)
    if link.name == "inverse":
        mu = np.where(np.abs(mu) < MU_FLOOR, MU_FLOOR, mu)
    return mu


def _valid(eta, mu, fam, link):
    return bool(np.all(link.valid_eta(eta)) and np.all(fam.valid_mu(mu)))


def _wls(X, z, w):
    sw = np.sqrt(w)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
    return beta


def fit_glm(X, y, family="gaussian", link=None, max_iter: int = 50, tol: float = 1e-8) -> GlmFit:
    """Maximum-likelihood GLM fit by Fisher scoring (IRLS).

    ``X`` must already contain the intercept column.  Iteration stops when the
    relative change in deviance falls below ``tol``.  Steps that leave the
    link/family domain or increase the deviance are halved; after
    ``MAX_HALVINGS`` halvings a ``FloatingPointError`` is raised.
    """
    fam = get_family(family)
    lnk = get_link(link or fam.canonical_link)
    X = check_array(X, dtype=float)
    y = check_vector(y, "y")
    n, p = X.shape
    if len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)} entries")
    if n <= p:
        raise ValueError(f"need more observations than parameters (n={n}, p={p})")
    check_full_rank(X)
    if not fam.valid_y(y).all():
        raise ValueError(f"response outside the {fam.name} support")

    mu = _start_mu(y, fam, lnk)
    eta = lnk.g(mu)
    # Fallback anchor for step-halving on the first iteration: intercept-only fit.
    beta_old = np.linalg.lstsq(X, np.full(n, lnk.g(np.array([max(np.mean(y), MU_FLOOR) if fam.positive else np.mean(y)]))[0]), rcond=None)[0]
    dev_old = np.inf
    clipped = False
    converged = False
    path = []
    it = 0
    for it in range(1, max_iter + 1):
        mu_w = np.maximum(mu, MU_FLOOR) if fam.positive else mu
        clipped = bool(fam.positive and np.any(mu < MU_FLOOR))
        gp = lnk.g_prime(mu_w)
        z = eta + (y - mu_w) * gp
        w = 1.0 / (fam.variance(mu_w) * gp**2)
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite IRLS working weights")
        beta = _wls(X, z, w)

        for _ in range(MAX_HALVINGS + 1):
            eta_new = X @ beta
            with np.errstate(all="ignore"):
                mu_new = lnk.g_inverse(eta_new)
            if _valid(eta_new, mu_new, fam, lnk):
                with np.errstate(all="ignore"):
                    dev_new = float(np.sum(fam.unit_deviance(y, mu_new)))
                if np.isfinite(dev_new) and dev_new <= dev_old + 1e-9 * abs(dev_old) + 1e-12 * n:
                    break
            beta = 0.5 * (beta + beta_old)
        else:
            raise FloatingPointError(
                f"IRLS left the {fam.name}/{lnk.name} domain after {MAX_HALVINGS} step halvings"
            )

        path.append(dev_new)
        rel = abs(dev_old - dev_new) / (abs(dev_new) + 0.1) if np.isfinite(dev_old) else np.inf
        beta_old, eta, mu, dev_old = beta, eta_new, mu_new, dev_new
        if rel < tol:
            converged = True
            break

    dev = float(dev_old)
    dispersion = max(dev / (n - p), np.finfo(float).tiny)
    if not converged:
        log.debug("IRLS did not converge for %s/%s in %d iterations", fam.name, lnk.name, it)
    return GlmFit(
        beta=beta_old,
        eta=eta,
        mu=mu,
        deviance=dev,
        dispersion=dispersion,
        iterations=it,
        converged=converged,
        family=fam.name,
        link=lnk.name,
        clipped=clipped,
        deviance_path=path,
    )


def predict_glm(fit: GlmFit, X_new, return_errors: bool = False):
    """Mean response ``g^{-1}(X_new @ beta)``.

    Rows whose linear predictor falls outside the link/family domain get NaN.
    With ``return_errors=True`` also returns a list of ``(row, message)``.
    """
    X_new = check_array(X_new, dtype=float)
    if X_new.shape[1] != len(fit.beta):
        raise ValueError(f"X_new has {X_new.shape[1]} columns, model has {len(fit.beta)}")
    fam, lnk = get_family(fit.family), get_link(fit.link)
    eta = X_new @ fit.beta
    with np.errstate(all="ignore"):
        mu = lnk.g_inverse(eta)
    ok = lnk.valid_eta(eta) & fam.valid_mu(mu)
    mu = np.where(ok, mu, np.nan)
    if not return_errors:
        return mu
    errors = [
        (int(i), f"linear predictor {eta[i]:.6g} outside the {fam.name}/{lnk.name} domain")
        for i in np.flatnonzero(~ok)
    ]
    return mu, errors


class GLMRegressor(RegressorMixin, BaseEstimator):
    """GLM estimator with a fixed family and link.

    Parameters
    ----------
    family : {"gaussian", "gamma", "inverse_gaussian"}
    link : str or None
        Defaults to the family's canonical link.
    fit_intercept : bool, default=True
    max_iter : int, default=50
    tol : float, default=1e-8
    """

    def __init__(self, family="gaussian", link=None, fit_intercept=True, max_iter=50, tol=1e-8):
        self.family = family
        self.link = link
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.tol = tol

    def _design(self, X):
        return np.column_stack([np.ones(X.shape[0]), X]) if self.fit_intercept else X

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self.fit_ = fit_glm(self._design(X), y, self.family, self.link, self.max_iter, self.tol)
        beta = self.fit_.beta
        self.intercept_ = float(beta[0]) if self.fit_intercept else 0.0
        self.coef_ = beta[1:] if self.fit_intercept else beta
        if not self.fit_.converged:
            warnings.warn("IRLS did not converge", RuntimeWarning, stacklevel=2)
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return predict_glm(self.fit_, self._design(X))
