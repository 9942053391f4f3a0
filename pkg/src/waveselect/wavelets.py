"""Orthonormal compactly supported wavelet filters and the periodic DWT.

Filters are stored with explicit index offsets so that the quadrature mirror
relation ``g[n] = (-1)**n * h[1 - n]`` can be checked tap by tap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FilterPair",
    "CoefficientPyramid",
    "RefinementMatrices",
    "make_haar",
    "make_daubechies",
    "get_filter",
    "refinement_matrices",
    "eigen_phi",
    "cascade_eval",
    "dwt",
    "idwt",
]

SQRT2 = np.sqrt(2.0)
_SQRT3 = np.sqrt(3.0)

# Extremal-phase Daubechies scale filters, support 0..2N-1.
_DAUBECHIES_TAPS = {
    3: (
        0.33267055295008261600,
        0.80689150931109257649,
        0.45987750211849157010,
        -0.13501102001025458870,
        -0.085441273882026661693,
        0.035226291885709536603,
    ),
    4: (
        0.23037781330889650086,
        0.71484657055291564709,
        0.63088076792985890788,
        -0.027983769416859854211,
        -0.18703481171909308408,
        0.030841381835560763627,
        0.032883011666885199735,
        -0.010597401785069032105,
    ),
}


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FilterPair:
    """Scale filter ``h`` and wavelet filter ``g``.

    ``h[i]`` is the tap with index ``h_offset + i``; likewise for ``g``.
    """

    h: np.ndarray
    g: np.ndarray
    vanishing_moments: int
    h_offset: int = 0
    g_offset: int = 0
    name: str = ""

    @classmethod
    def from_scale_filter(cls, h, vanishing_moments, name=""):
        h = np.asarray(h, dtype=float)
        L = len(h)
        # g_n = (-1)^n h_{1-n}; h has support 0..L-1 so g has support 2-L..1
        g_offset = 2 - L
        n = np.arange(g_offset, 2)
        g = np.array([(-1.0) ** k * h[1 - k] for k in n])
        return cls(_frozen(h), _frozen(g), int(vanishing_moments), 0, g_offset, name)

    @property
    def length(self) -> int:
        return len(self.h)

    def h_tap(self, n: int) -> float:
        i = n - self.h_offset
        return float(self.h[i]) if 0 <= i < len(self.h) else 0.0

    def g_tap(self, n: int) -> float:
        i = n - self.g_offset
        return float(self.g[i]) if 0 <= i < len(self.g) else 0.0

    def h_indices(self) -> np.ndarray:
        return np.arange(self.h_offset, self.h_offset + len(self.h))

    def g_indices(self) -> np.ndarray:
        return np.arange(self.g_offset, self.g_offset + len(self.g))


@dataclass
class CoefficientPyramid:
    """Approximation block at ``coarse_level`` plus details for every finer level.

    ``details[j]`` holds the ``2**j`` detail coefficients of level ``j``,
    for ``coarse_level <= j < max_level``.
    """

    coarse_level: int
    max_level: int
    approx: np.ndarray
    details: dict = field(default_factory=dict)
    thresholded: bool = False

    def __post_init__(self):
        self.approx = np.asarray(self.approx, dtype=float)
        self.details = {int(j): np.asarray(d, dtype=float) for j, d in self.details.items()}

    def validate(self):
        j0, J = self.coarse_level, self.max_level
        if not 0 <= j0 < J:
            raise ValueError(f"need 0 <= coarse_level < max_level, got {j0}, {J}")
        if len(self.approx) != 2**j0:
            raise ValueError(
                f"approximation block has {len(self.approx)} coefficients, expected {2**j0}"
            )
        if sorted(self.details) != list(range(j0, J)):
            raise ValueError(f"details must cover levels {j0}..{J - 1}, got {sorted(self.details)}")
        for j, d in self.details.items():
            if len(d) != 2**j:
                raise ValueError(f"level {j} has {len(d)} detail coefficients, expected {2**j}")

    @property
    def n_coefficients(self) -> int:
        return len(self.approx) + sum(len(d) for d in self.details.values())

    def flat(self) -> np.ndarray:
        """All coefficients, coarse block first, then levels in increasing order."""
        parts = [self.approx] + [self.details[j] for j in range(self.coarse_level, self.max_level)]
        return np.concatenate(parts)

    def copy(self) -> "CoefficientPyramid":
        return CoefficientPyramid(
            self.coarse_level,
            self.max_level,
            self.approx.copy(),
            {j: d.copy() for j, d in self.details.items()},
            self.thresholded,
        )


@dataclass(frozen=True)
class RefinementMatrices:
    T0: np.ndarray
    T1: np.ndarray


def make_haar() -> FilterPair:
    return FilterPair.from_scale_filter([SQRT2 / 2, SQRT2 / 2], 1, name="haar")


def make_daubechies(N: int) -> FilterPair:
    """Daubechies(N) extremal-phase filter pair with ``N`` vanishing moments."""
    if N == 1:
        return make_haar()
    if N == 2:
        h = np.array([1 + _SQRT3, 3 + _SQRT3, 3 - _SQRT3, 1 - _SQRT3]) / (4 * SQRT2)
        return FilterPair.from_scale_filter(h, 2, name="daub2")
    if N in _DAUBECHIES_TAPS:
        return FilterPair.from_scale_filter(_DAUBECHIES_TAPS[N], N, name=f"daub{N}")
    raise ValueError(f"Daubechies({N}) is not supported; choose N in 1..4")


def get_filter(name) -> FilterPair:
    """Resolve ``'haar'``, ``'daubN'`` or an existing :class:`FilterPair`."""
    if isinstance(name, FilterPair):
        return name
    key = str(name).strip().lower()
    if key == "haar":
        return make_haar()
    if key.startswith("daub"):
        try:
            N = int(key[4:])
        except ValueError:
            raise ValueError(f"unknown wavelet {name!r}") from None
        return make_daubechies(N)
    raise ValueError(f"unknown wavelet {name!r}; expected 'haar' or 'daubN'")


def refinement_matrices(fp: FilterPair) -> RefinementMatrices:
    """Cascade matrices ``T0[i, j] = sqrt2 h[2i-j-1]``, ``T1[i, j] = sqrt2 h[2i-j]`` (1-based)."""
    L = 2 * fp.vanishing_moments - 1
    idx = np.arange(1, L + 1)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    tap = np.vectorize(fp.h_tap, otypes=[float])
    T0 = SQRT2 * tap(2 * i - j - 1)
    T1 = SQRT2 * tap(2 * i - j)
    return RefinementMatrices(T0, T1)


def eigen_phi(fp: FilterPair) -> np.ndarray:
    """Scale function values at the interior integers ``1..2N-2``.

    Solves ``phi(k) = sum_m sqrt2 h[m] phi(2k - m)`` restricted to the interior
    integers and normalizes so the values sum to one.
    """
    N = fp.vanishing_moments
    if N < 1:
        raise ValueError("vanishing_moments must be positive")
    if N == 1:
        return np.zeros(0)
    ks = np.arange(1, 2 * N - 1)
    A = np.array([[SQRT2 * fp.h_tap(2 * k - m) for m in ks] for k in ks])
    w, V = np.linalg.eig(A)
    near_one = np.abs(w - 1.0) < 1e-8
    if near_one.sum() != 1:
        raise ValueError("eigenvalue 1 of the integer refinement matrix is not simple")
    v = np.real(V[:, np.argmax(near_one)])
    return v / v.sum()


def _dyadic_digits(t, depth):
    digits = np.empty(depth, dtype=int)
    for k in range(depth):
        t *= 2.0
        d = 1 if t >= 1.0 else 0
        digits[k] = d
        t -= d
    return digits


def cascade_eval(fp: FilterPair, t: float, depth: int = 24) -> np.ndarray:
    """Approximate ``(phi(t), phi(t+1), ..., phi(t+2N-2))`` for ``t`` in (0, 1).

    The product ``T[d1] @ ... @ T[d_depth]`` over the binary digits of ``t``
    tends to a matrix whose every column is the requested vector.  The product
    is applied to the integer-point values of ``phi`` (a vector summing to one),
    which reproduces dyadic points exactly once the expansion terminates.
    """
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in the open interval (0, 1), got {t}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    N = fp.vanishing_moments
    if N == 1:
        return np.ones(1)
    mats = refinement_matrices(fp)
    v = np.concatenate([[0.0], eigen_phi(fp)])  # phi(0) = 0 for N >= 2
    P = np.eye(2 * N - 1)
    for d in _dyadic_digits(float(t), depth):
        P = P @ (mats.T1 if d else mats.T0)
    return P @ v


def _check_dyadic(n):
    if n < 2 or n & (n - 1):
        raise ValueError(f"signal length must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def _analysis_step(c, fp):
    M = len(c)
    k2 = 2 * np.arange(M // 2)
    a = np.zeros(M // 2)
    d = np.zeros(M // 2)
    for tap, n in zip(fp.h, fp.h_indices()):
        a += tap * c[(k2 + n) % M]
    for tap, n in zip(fp.g, fp.g_indices()):
        d += tap * c[(k2 + n) % M]
    return a, d


def _synthesis_step(a, d, fp):
    M = 2 * len(a)
    k2 = 2 * np.arange(len(a))
    c = np.zeros(M)
    for tap, n in zip(fp.h, fp.h_indices()):
        np.add.at(c, (k2 + n) % M, tap * a)
    for tap, n in zip(fp.g, fp.g_indices()):
        np.add.at(c, (k2 + n) % M, tap * d)
    return c


def dwt(signal, fp: FilterPair, j0: int = 0) -> CoefficientPyramid:
    """Periodic pyramid decomposition of a length ``2**J`` signal down to level ``j0``."""
    c = np.asarray(signal, dtype=float).ravel()
    J = _check_dyadic(len(c))
    if not 0 <= j0 < J:
        raise ValueError(f"j0 must satisfy 0 <= j0 < {J}, got {j0}")
    details = {}
    for j in range(J - 1, j0 - 1, -1):
        c, details[j] = _analysis_step(c, fp)
    return CoefficientPyramid(j0, J, c, details)


def idwt(pyr: CoefficientPyramid, fp: FilterPair) -> np.ndarray:
    """Invert :func:`dwt`."""
    pyr.validate()
    c = pyr.approx
    for j in range(pyr.coarse_level, pyr.max_level):
        c = _synthesis_step(c, pyr.details[j], fp)
    return c
