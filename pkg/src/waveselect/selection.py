"""Choose a parametric form by closeness to a wavelet regression fit.

The wavelet fit is computed on the min-max rescaled OLS linear predictor.
Every candidate is then fitted to the original data by its own estimator and
scored against that fit by RMSE and by the median absolute error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .glm import fit_glm, get_family, get_link, predict_glm
from .nls import NlsModel, builtin_catalog, fit_nls, get_model, load_models
from .regression import AGGREGATES, BOUNDARIES, DEFAULT_COARSE_LEVEL, DEFAULT_RULE, DEFAULT_WAVELET, MAX_RESOLUTION, ThresholdPolicy, choose_resolution, fit_wavelet
from .wavelets import get_filter
from .validation import check_vector, has_intercept

__all__ = [
    "DegenerateDataError",
    "CandidateModel",
    "CandidateScore",
    "WaveletConfig",
    "SelectionReport",
    "score",
    "nonlinear_candidate",
    "glm_candidate",
    "parse_candidates",
    "wp_select",
    "WaveletProcedureSelector",
]

CRITERIA = ("rmse", "mae")
MIN_OBSERVATIONS = 16
TIE_TOLERANCE = 1e-12


class DegenerateDataError(ValueError):
    """The data cannot support a wavelet fit (e.g. a constant linear predictor)."""


@dataclass(frozen=True)
class CandidateModel:
    """A parametric form: a nonlinear regression function or a GLM family/link."""

    id: str
    kind: str
    model: Optional[NlsModel] = None
    family: Optional[str] = None
    link: Optional[str] = None

    def fit(self, X, y):
        """Fit to the design ``X`` (intercept first) and return ``(fitted, result)``."""
        if self.kind == "nonlinear":
            x = _nonlinear_predictor(X)
            res = fit_nls(self.model, x, y)
            return res.fitted, res
        res = fit_glm(X, y, self.family, self.link)
        return res.mu, res

    def predict(self, result, X):
        if self.kind == "nonlinear":
            return self.model(_nonlinear_predictor(X), result.beta_hat)
        return predict_glm(result, X)


def _nonlinear_predictor(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X
    cols = [j for j in range(X.shape[1]) if not np.all(X[:, j] == 1.0)]
    if not cols:
        raise ValueError("design has no predictor column besides the intercept")
    return X[:, cols[0]]


def nonlinear_candidate(model, cid: Optional[str] = None) -> CandidateModel:
    model = get_model(model)
    return CandidateModel(cid or model.id, "nonlinear", model=model)


def glm_candidate(family, link, cid: Optional[str] = None) -> CandidateModel:
    fam, lnk = get_family(family), get_link(link)
    return CandidateModel(cid or f"glm:{fam.name}:{lnk.name}", "glm", family=fam.name, link=lnk.name)


def parse_candidates(spec) -> list[CandidateModel]:
    """Resolve a candidate specification.

    ``spec`` is a comma-separated string or a list of tokens: registered model
    ids (``f1``), GLM tokens (``glm:gamma:log``), and ``file:path`` references to
    expression-defined model files.  ``CandidateModel`` and ``NlsModel``
    instances pass through.
    """
    if isinstance(spec, str):
        tokens = [t.strip() for t in spec.split(",") if t.strip()]
    else:
        tokens = list(spec)
    out = []
    for tok in tokens:
        if isinstance(tok, CandidateModel):
            out.append(tok)
        elif isinstance(tok, NlsModel):
            out.append(nonlinear_candidate(tok))
        elif tok.startswith("glm:"):
            parts = tok.split(":")
            if len(parts) != 3:
                raise ValueError(f"GLM candidate must look like glm:family:link, got {tok!r}")
            out.append(glm_candidate(parts[1], parts[2]))
        elif tok.startswith("file:"):
            out.extend(nonlinear_candidate(m) for m in load_models(tok[5:]))
        elif tok == "builtin":
            out.extend(nonlinear_candidate(m) for m in builtin_catalog())
        else:
            out.append(nonlinear_candidate(tok))
    return out


@dataclass(frozen=True)
class WaveletConfig:
    wavelet: str = DEFAULT_WAVELET
    j0: int = DEFAULT_COARSE_LEVEL
    rule: str = DEFAULT_RULE
    max_level: int = MAX_RESOLUTION
    boundary: str = "reflect"
    aggregate: str = "mean"

    def __post_init__(self):
        get_filter(self.wavelet)
        ThresholdPolicy(rule=self.rule)
        if self.j0 < 0 or not 1 <= self.max_level <= MAX_RESOLUTION:
            raise ValueError(f"need j0 >= 0 and 1 <= max_level <= {MAX_RESOLUTION}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")

    def fit(self, x, y):
        """Wavelet fit of ``y`` on ``x`` in [0, 1] with this configuration."""
        J = choose_resolution(len(y), self.max_level)
        return fit_wavelet(
            x, y, self.wavelet, self.j0, ThresholdPolicy(rule=self.rule), J=J,
            boundary=self.boundary, aggregate=self.aggregate,
        )


@dataclass
class CandidateScore:
    rmse: float
    mae: float
    fit_ok: bool
    converged: bool = False
    message: str = ""


@dataclass
class SelectionReport:
    scores: dict
    winner_rmse: Optional[str]
    winner_mae: Optional[str]
    wavelet_diagnostics: dict
    eta_rescale: tuple
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    wavelet_fit: list = field(default_factory=list)
    candidate_fits: dict = field(default_factory=dict)

    def winner(self, criterion: str = "rmse") -> Optional[str]:
        return {"rmse": self.winner_rmse, "mae": self.winner_mae}[criterion]

    def ranking(self, criterion: str = "rmse") -> list[str]:
        ok = [(s.rmse if criterion == "rmse" else s.mae, cid) for cid, s in self.scores.items() if s.fit_ok]
        return [cid for _, cid in sorted(ok)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta_rescale"] = list(self.eta_rescale)
        d["wavelet_diagnostics"] = {
            "null_fraction_by_level": {str(k): v for k, v in self.wavelet_diagnostics["null_fraction_by_level"].items()},
            **{k: v for k, v in self.wavelet_diagnostics.items() if k != "null_fraction_by_level"},
        }
        for s in d["scores"].values():
            for k in ("rmse", "mae"):
                if not math.isfinite(s[k]):
                    s[k] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionReport":
        scores = {
            k: CandidateScore(
                math.nan if v["rmse"] is None else v["rmse"],
                math.nan if v["mae"] is None else v["mae"],
                v["fit_ok"],
                v.get("converged", False),
                v.get("message", ""),
            )
            for k, v in d["scores"].items()
        }
        diag = dict(d["wavelet_diagnostics"])
        diag["null_fraction_by_level"] = {int(k): v for k, v in diag["null_fraction_by_level"].items()}
        return cls(
            scores=scores,
            winner_rmse=d["winner_rmse"],
            winner_mae=d["winner_mae"],
            wavelet_diagnostics=diag,
            eta_rescale=tuple(d["eta_rescale"]),
            x=list(d.get("x", [])),
            y=list(d.get("y", [])),
            wavelet_fit=list(d.get("wavelet_fit", [])),
            candidate_fits={k: list(v) for k, v in d.get("candidate_fits", {}).items()},
        )


def score(mu_hat, mu_tilde):
    """``(rmse, mae)`` between candidate and wavelet fitted values.

    ``mae`` is the median of the absolute differences.
    """
    a = np.asarray(mu_hat, dtype=float)
    b = np.asarray(mu_tilde, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if np.isnan(a).any() or np.isnan(b).any():
        raise ValueError("fitted values contain NaN")
    diff = a - b
    return float(np.sqrt(np.mean(diff**2))), float(np.median(np.abs(diff)))


def _argmin(scores: dict, key: str) -> Optional[str]:
    ok = [(getattr(s, key), cid) for cid, s in scores.items() if s.fit_ok]
    if not ok:
        return None
    best = min(v for v, _ in ok)
    tied = [cid for v, cid in ok if v <= best + TIE_TOLERANCE * max(1.0, abs(best))]
    return min(tied)


def rescaled_linear_predictor(X, y):
    """OLS linear predictor mapped onto [0, 1]; returns ``(eta_star, (min, max))``."""
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    eta = X @ beta
    lo, hi = float(eta.min()), float(eta.max())
    if not hi - lo > 1e-12 * max(1.0, abs(hi), abs(lo)):
        raise DegenerateDataError("degenerate linear predictor: OLS fit is constant")
    return np.clip((eta - lo) / (hi - lo), 0.0, 1.0), (lo, hi)


def wp_select(X, y, candidates, criteria=CRITERIA, wavelet_config: WaveletConfig = WaveletConfig(), keep_series=True):
    """Select the candidate whose fitted values are closest to the wavelet fit.

    Parameters
    ----------
    X : array of shape (n, p)
        Design matrix including the intercept column.
    y : array of shape (n,)
    candidates : list
        Anything accepted by :func:`parse_candidates`; at least two.
    criteria : iterable of {"rmse", "mae"}
        Criteria for which a winner is reported.
    wavelet_config : WaveletConfig

    Returns
    -------
    SelectionReport
        Candidates that fail to fit are marked ``fit_ok=False`` and excluded.
    """
    X = check_array(X, dtype=float)
    y = check_vector(y, "y")
    n = X.shape[0]
    if len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)} entries")
    if n < MIN_OBSERVATIONS:
        raise ValueError(f"need at least {MIN_OBSERVATIONS} observations, got {n}")
    if not has_intercept(X):
        raise ValueError("design matrix must include an intercept column of ones")
    criteria = tuple(criteria)
    for c in criteria:
        if c not in CRITERIA:
            raise ValueError(f"unknown criterion {c!r}")
    cands = parse_candidates(candidates)
    if len(cands) < 2:
        raise ValueError("need at least two candidate models")
    ids = [c.id for c in cands]
    if len(set(ids)) != len(ids):
        raise ValueError(f"candidate ids must be unique, got {ids}")

    eta_star, bounds = rescaled_linear_predictor(X, y)
    wfit = wavelet_config.fit(eta_star, y)
    J = wfit.grid.J
    mu_tilde = wfit.fitted

    scores, fits = {}, {}
    for cand in cands:
        try:
            with np.errstate(all="ignore"):
                mu_hat, res = cand.fit(X, y)
            rmse, mae = score(mu_hat, mu_tilde)
            if not (math.isfinite(rmse) and math.isfinite(mae)):
                raise FloatingPointError("non-finite fitted values")
            scores[cand.id] = CandidateScore(rmse, mae, True, bool(res.converged))
            fits[cand.id] = mu_hat
        except (ValueError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
            scores[cand.id] = CandidateScore(math.nan, math.nan, False, False, f"{type(exc).__name__}: {exc}")

    report = SelectionReport(
        scores=scores,
        winner_rmse=_argmin(scores, "rmse") if "rmse" in criteria else None,
        winner_mae=_argmin(scores, "mae") if "mae" in criteria else None,
        wavelet_diagnostics={
            "null_fraction_by_level": wfit.null_fraction_by_level,
            "threshold": wfit.lam,
            "sigma": wfit.sigma,
            "resolution": J,
            "warnings": list(wfit.warnings),
        },
        eta_rescale=bounds,
    )
    if keep_series:
        report.x = _nonlinear_predictor(X).tolist() if X.shape[1] > 1 else eta_star.tolist()
        report.y = y.tolist()
        report.wavelet_fit = mu_tilde.tolist()
        report.candidate_fits = {k: np.asarray(v, dtype=float).tolist() for k, v in fits.items()}
    return report


class WaveletProcedureSelector(RegressorMixin, BaseEstimator):
    """Pick the parametric form closest to a wavelet regression fit.

    Parameters
    ----------
    candidates : str or list, default="f1,f2,f3,f4,f24"
        Candidate specification, see :func:`parse_candidates`.
    criterion : {"rmse", "mae"}, default="rmse"
        Criterion whose winner is used by ``predict``.
    wavelet : str, default="daub4"
    j0 : int, default=3
    threshold : {"hard", "soft"}, default="hard"
    max_level : int, default=12
    boundary : {"reflect", "periodic"}, default="reflect"
    aggregate : {"mean", "nearest"}, default="mean"
        How several observations falling in one grid cell are combined.

    Attributes
    ----------
    report_ : SelectionReport
    winner_ : str
    candidate_ : CandidateModel
        The winning candidate, refitted result in ``candidate_result_``.
    """

    def __init__(
        self,
        candidates="f1,f2,f3,f4,f24",
        criterion="rmse",
        wavelet=DEFAULT_WAVELET,
        j0=DEFAULT_COARSE_LEVEL,
        threshold=DEFAULT_RULE,
        max_level=MAX_RESOLUTION,
        boundary="reflect",
        aggregate="mean",
    ):
        self.candidates = candidates
        self.criterion = criterion
        self.wavelet = wavelet
        self.j0 = j0
        self.threshold = threshold
        self.max_level = max_level
        self.boundary = boundary
        self.aggregate = aggregate

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        design = np.column_stack([np.ones(len(y)), X])
        cfg = WaveletConfig(self.wavelet, self.j0, self.threshold, self.max_level, self.boundary, self.aggregate)
        self.report_ = wp_select(design, y, self.candidates, CRITERIA, cfg)
        self.winner_ = self.report_.winner(self.criterion)
        if self.winner_ is None:
            raise RuntimeError("no candidate could be fitted")
        self.candidate_ = next(c for c in parse_candidates(self.candidates) if c.id == self.winner_)
        _, self.candidate_result_ = self.candidate_.fit(design, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "candidate_")
        X = check_array(X)
        return self.candidate_.predict(self.candidate_result_, np.column_stack([np.ones(X.shape[0]), X]))
