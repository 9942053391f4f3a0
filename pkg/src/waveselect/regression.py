"""Wavelet shrinkage regression for irregularly spaced data.

Observations on [0, 1] are moved onto a dyadic grid (one donor observation per
cell, empty cells copied from the left), the gridded series is transformed with
the periodic DWT, detail coefficients are shrunk, and the reconstruction is read
back at the original design points.

By default the gridded series is mirrored before the transform so that the
periodic wrap joins two equal end values instead of opening a jump between
``y(0)`` and ``y(1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_1d_predictor, check_vector
from .wavelets import CoefficientPyramid, FilterPair, dwt, get_filter, idwt

__all__ = [
    "GriddedSample",
    "ThresholdPolicy",
    "WaveletFit",
    "choose_resolution",
    "map_to_grid",
    "soft_threshold",
    "hard_threshold",
    "universal_threshold",
    "threshold",
    "fit_wavelet",
    "WaveletRegressor",
]

MAX_RESOLUTION = 12
DEFAULT_COARSE_LEVEL = 3
DEFAULT_WAVELET = "daub4"
DEFAULT_RULE = "hard"
BOUNDARIES = ("reflect", "periodic")
AGGREGATES = ("mean", "nearest")
_MAD_CONSTANT = 0.6745


@dataclass
class GriddedSample:
    J: int
    grid_t: np.ndarray
    grid_y: np.ndarray
    source_index: np.ndarray
    cell_of_obs: np.ndarray
    multiplicity_fraction: float = 0.0

    @property
    def size(self) -> int:
        return len(self.grid_t)


@dataclass(frozen=True)
class ThresholdPolicy:
    rule: str = DEFAULT_RULE
    lambda_rule: str = "universal"
    sigma_estimator: str = "mad_finest"

    def __post_init__(self):
        if self.rule not in ("soft", "hard"):
            raise ValueError(f"threshold rule must be 'soft' or 'hard', got {self.rule!r}")
        if self.lambda_rule != "universal":
            raise ValueError(f"unsupported lambda rule {self.lambda_rule!r}")
        if self.sigma_estimator != "mad_finest":
            raise ValueError(f"unsupported sigma estimator {self.sigma_estimator!r}")


@dataclass
class WaveletFit:
    pyramid: CoefficientPyramid
    fitted: np.ndarray
    null_fraction_by_level: dict
    grid: GriddedSample
    grid_fit: np.ndarray
    lam: float
    sigma: float
    warnings: list = field(default_factory=list)
    boundary: str = "reflect"

    def evaluate(self, t) -> np.ndarray:
        """Piecewise-constant readout of the reconstructed grid at ``t`` in [0, 1]."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return self.grid_fit[_cell_index(t, self.grid.J)]


def choose_resolution(n: int, cap: int = MAX_RESOLUTION) -> int:
    """Smallest ``J`` with ``2**J >= n``, capped at ``cap``."""
    if n < 1:
        raise ValueError("need at least one observation")
    return min(max(1, math.ceil(math.log2(n))), cap)


def _cell_index(t, J):
    m = 2**J
    return np.minimum(np.floor(t * m).astype(int), m - 1)


def map_to_grid(x, y, J: int, aggregate: str = "mean") -> GriddedSample:
    """Place observations on the ``2**J`` cell grid of [0, 1].

    An occupied cell takes the mean of its observations (``aggregate="mean"``)
    or the single observation closest to the cell center (``"nearest"``, ties
    to the lower index).  ``source_index`` always records that nearest donor.
    An empty cell copies its nearest occupied neighbour on the left; leading
    empty cells copy the first occupied cell.
    """
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    x = check_vector(x, "x")
    y = check_vector(y, "y")
    if len(x) == 0:
        raise ValueError("cannot grid an empty sample")
    if len(x) != len(y):
        raise ValueError(f"x and y differ in length ({len(x)} != {len(y)})")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("x must lie in [0, 1]")
    if J < 1:
        raise ValueError(f"grid resolution must be >= 1, got {J}")

    m = 2**J
    grid_t = (np.arange(m) + 0.5) / m
    cells = _cell_index(x, J)
    dist = np.abs(x - grid_t[cells])
    # lexsort: primary key cell, then distance to center, then index
    order = np.lexsort((np.arange(len(x)), dist, cells))
    first = np.ones(len(order), dtype=bool)
    first[1:] = cells[order][1:] != cells[order][:-1]
    donors = order[first]

    source = np.full(m, -1, dtype=int)
    source[cells[donors]] = donors
    counts = np.bincount(cells, minlength=m)

    filled = np.maximum.accumulate(np.where(source >= 0, np.arange(m), -1))
    first_occupied = int(np.argmax(source >= 0))
    filled[filled < 0] = first_occupied
    source = source[filled]

    occupied = counts > 0
    if aggregate == "mean":
        sums = np.bincount(cells, weights=y, minlength=m)
        grid_y = (sums / np.maximum(counts, 1))[filled]
    else:
        grid_y = y[source]
    return GriddedSample(
        J=J,
        grid_t=grid_t,
        grid_y=grid_y,
        source_index=source,
        cell_of_obs=cells,
        multiplicity_fraction=float((counts > 1).sum() / occupied.sum()),
    )


def soft_threshold(d, lam):
    d = np.asarray(d, dtype=float)
    return np.sign(d) * np.maximum(np.abs(d) - lam, 0.0)


def hard_threshold(d, lam):
    d = np.asarray(d, dtype=float)
    return np.where(np.abs(d) > lam, d, 0.0)


def universal_threshold(pyr: CoefficientPyramid):
    """``(lam, sigma)`` with sigma from the MAD of the finest detail level."""
    finest = pyr.details[pyr.max_level - 1]
    sigma = float(np.median(np.abs(finest)) / _MAD_CONSTANT)
    n = 2**pyr.max_level
    return sigma * math.sqrt(2.0 * math.log(n)), sigma


def threshold(pyr: CoefficientPyramid, policy: ThresholdPolicy = ThresholdPolicy(), lam=None):
    """Shrink every detail level of ``pyr``; the approximation block is left alone.

    Returns a new pyramid.  ``lam`` overrides the universal threshold.
    """
    if lam is None:
        lam, _ = universal_threshold(pyr)
    if lam < 0:
        raise ValueError("threshold must be non-negative")
    shrink = soft_threshold if policy.rule == "soft" else hard_threshold
    out = pyr.copy()
    out.details = {j: shrink(d, lam) for j, d in pyr.details.items()}
    out.thresholded = True
    return out


def fit_wavelet(
    x,
    y,
    fp: FilterPair | str = DEFAULT_WAVELET,
    j0: int = DEFAULT_COARSE_LEVEL,
    policy: ThresholdPolicy = ThresholdPolicy(),
    J: int | None = None,
    boundary: str = "reflect",
    aggregate: str = "mean",
) -> WaveletFit:
    """Wavelet regression of ``y`` on design points ``x`` in [0, 1].

    The coarse block at level ``j0`` is kept as estimated; every finer level is
    thresholded.  ``null_fraction_by_level`` covers levels ``0..J-1``; levels
    below ``j0`` are never shrunk and report 0.

    With ``boundary="reflect"`` the ``2**J`` grid values are followed by their
    mirror image and the ``2**(J+1)`` series is transformed.  Level ``j+1`` of
    that pyramid has the same spatial scale as level ``j`` of the grid, so
    ``j0`` and the reported levels are shifted accordingly and the returned
    pyramid is the one of the mirrored series.
    """
    fp = get_filter(fp)
    x = check_vector(x, "x")
    y = check_vector(y, "y")
    if len(y) < 8:
        raise ValueError(f"wavelet regression needs at least 8 observations, got {len(y)}")
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}, got {boundary!r}")
    if J is None:
        J = choose_resolution(len(y))
    if not 0 <= j0 < J:
        raise ValueError(f"coarse level j0={j0} must satisfy 0 <= j0 < J={J}")

    grid = map_to_grid(x, y, J, aggregate)
    shift = 1 if boundary == "reflect" else 0
    signal = np.concatenate([grid.grid_y, grid.grid_y[::-1]]) if shift else grid.grid_y
    raw = dwt(signal, fp, j0 + shift)
    lam, sigma = universal_threshold(raw)
    pyr = threshold(raw, policy, lam)
    grid_fit = idwt(pyr, fp)[: grid.size]

    nulls = {j: 0.0 for j in range(J)}
    for j, d in pyr.details.items():
        nulls[j - shift] = float(np.mean(d == 0.0))

    warnings = []
    if aggregate == "nearest" and grid.multiplicity_fraction > 0.05:
        warnings.append(
            f"{100 * grid.multiplicity_fraction:.1f}% of occupied grid cells held several "
            "observations; only the one nearest the cell center was used"
        )
    return WaveletFit(
        pyramid=pyr,
        fitted=grid_fit[grid.cell_of_obs],
        null_fraction_by_level=nulls,
        grid=grid,
        grid_fit=grid_fit,
        lam=float(lam),
        sigma=sigma,
        warnings=warnings,
        boundary=boundary,
    )


class WaveletRegressor(RegressorMixin, BaseEstimator):
    """Nonparametric wavelet shrinkage regressor on a single predictor.

    The predictor is min-max rescaled to [0, 1] during ``fit``; ``predict``
    applies the same rescaling and clips to the fitted range.

    Parameters
    ----------
    wavelet : str, default="daub4"
        ``"haar"`` or ``"daubN"`` for N in 1..4.
    j0 : int, default=3
        Coarse level; details at this level and above are thresholded.
    threshold : {"hard", "soft"}, default="hard"
    max_level : int, default=12
        Upper bound on the grid resolution ``J``.
    boundary : {"reflect", "periodic"}, default="reflect"
    aggregate : {"mean", "nearest"}, default="mean"
    """

    def __init__(
        self,
        wavelet=DEFAULT_WAVELET,
        j0=DEFAULT_COARSE_LEVEL,
        threshold=DEFAULT_RULE,
        max_level=MAX_RESOLUTION,
        boundary="reflect",
        aggregate="mean",
    ):
        self.wavelet = wavelet
        self.j0 = j0
        self.threshold = threshold
        self.max_level = max_level
        self.boundary = boundary
        self.aggregate = aggregate

    def _rescale(self, x):
        span = self.x_max_ - self.x_min_
        return np.clip((x - self.x_min_) / span, 0.0, 1.0)

    def fit(self, X, y):
        x, y = check_1d_predictor(X, y)
        self.x_min_, self.x_max_ = float(x.min()), float(x.max())
        if self.x_max_ == self.x_min_:
            raise ValueError("predictor is constant; cannot rescale to [0, 1]")
        J = choose_resolution(len(y), self.max_level)
        self.fit_ = fit_wavelet(
            self._rescale(x), y, self.wavelet, self.j0, ThresholdPolicy(rule=self.threshold), J=J,
            boundary=self.boundary, aggregate=self.aggregate,
        )
        self.n_features_in_ = 1
        self.null_fraction_by_level_ = self.fit_.null_fraction_by_level
        self.threshold_ = self.fit_.lam
        self.sigma_ = self.fit_.sigma
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        x, _ = check_1d_predictor(X)
        return self.fit_.evaluate(self._rescale(x))
