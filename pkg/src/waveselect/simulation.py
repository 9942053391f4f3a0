"""Monte Carlo harness for the four evaluation scenarios.

s1  nonlinear forms f1..f4 against the candidate catalog
s2  f2 against the single competitor f24
s3  GLM link identification within a family
s4  wavelet fit against the true GLM, with or without an intercept gap

Every replicate draws from its own generator seeded by
``(seed, configuration fingerprint, replicate index)``, so results do not
depend on how replicates are scheduled across workers.
"""

from __future__ import annotations

import math
import os
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .glm import fit_glm, get_family, get_link
from .nls import HeuristicWarning, builtin_catalog, get_model
from .selection import CRITERIA, WaveletConfig, glm_candidate, nonlinear_candidate, rescaled_linear_predictor, score, wp_select

__all__ = [
    "DEPENDENCE_LEVELS",
    "SAMPLE_SIZES",
    "S1_SETTINGS",
    "GLM_ROWS",
    "S3_BETA",
    "NOISE_CV",
    "GeneratorSpec",
    "ScenarioConfig",
    "MonteCarloResult",
    "generate_s1",
    "generate_s3",
    "generate_s4_gap",
    "glm_noise",
    "run_scenario",
    "run_replicate",
    "thread_count",
]

DEPENDENCE_LEVELS = ("weak", "moderate", "strong")
SAMPLE_SIZES = (128, 256, 512)
THREADS_ENV = "WAVESELECT_THREADS"


@dataclass(frozen=True)
class GeneratorSpec:
    x_low: float
    x_high: float
    beta_true: tuple
    noise: dict  # dependence level -> published noise parameter


# Published settings: X range, true coefficients and the N(0, v) noise entries.
S1_SETTINGS = {
    "f1": GeneratorSpec(-6.0, 6.0, (2.0, 3.0, 1.0), {"strong": 0.01, "moderate": 0.1, "weak": 0.2}),
    "f2": GeneratorSpec(1.0, 4.0, (0.25, 1.0), {"strong": 0.005, "moderate": 0.03, "weak": 0.06}),
    "f3": GeneratorSpec(5.0, 210.0, (20.0, 120.0), {"strong": 1.0, "moderate": 5.0, "weak": 10.0}),
    "f4": GeneratorSpec(0.0, 4.0, (4.0, 1.0), {"strong": 0.1, "moderate": 1.0, "weak": 2.0}),
}

# Family/link rows of the GLM tables; 1/mu^2 only with the inverse Gaussian.
GLM_ROWS = (
    ("gaussian", "identity"),
    ("gaussian", "inverse"),
    ("gaussian", "log"),
    ("gamma", "identity"),
    ("gamma", "inverse"),
    ("gamma", "log"),
    ("inverse_gaussian", "identity"),
    ("inverse_gaussian", "inverse"),
    ("inverse_gaussian", "log"),
    ("inverse_gaussian", "inverse_squared"),
)

# Harness choices (not published values): linear predictor coefficients that keep
# the mean positive for x in [0.5, 1.5] under every link.
S3_BETA = {
    "identity": (0.5, 1.0),
    "log": (0.5, 1.0),
    "inverse": (0.5, 1.0),
    "inverse_squared": (0.5, 1.0),
}
S3_X_RANGE = (0.5, 1.5)

# Harness choice: coefficient of variation of the response at the centre of the
# design for each dependence level.
NOISE_CV = {"weak": 0.06, "moderate": 0.03, "strong": 0.01}

# Harness choice: intercept jump at the x-midpoint, as a fraction of the
# linear predictor's range over the design.
GAP_FRACTION = 0.25

_MAX_RETRIES = 20


def thread_count(default: int = 1) -> int:
    """Worker count from ``WAVESELECT_THREADS`` (falls back to ``default``)."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


# --- generators -------------------------------------------------------------


def s1_noise_sd(model_id: str, dependence: str, noise_reading: str = "sd") -> float:
    v = S1_SETTINGS[model_id].noise[dependence]
    if noise_reading == "variance":
        return math.sqrt(v)
    if noise_reading == "sd":
        return v
    raise ValueError(f"noise_reading must be 'sd' or 'variance', got {noise_reading!r}")


def generate_s1(model_id, n, dependence, rng, noise_reading="sd", noise_sd=None):
    """Draw ``(x, y)`` from a published s1/s2 configuration.

    ``noise_sd`` overrides the table (``0`` gives noiseless data).
    """
    if model_id not in S1_SETTINGS:
        raise ValueError(f"scenario 1 models are {sorted(S1_SETTINGS)}, got {model_id!r}")
    if dependence not in DEPENDENCE_LEVELS:
        raise ValueError(f"unknown dependence level {dependence!r}")
    spec = S1_SETTINGS[model_id]
    sd = s1_noise_sd(model_id, dependence, noise_reading) if noise_sd is None else float(noise_sd)
    x = np.sort(rng.uniform(spec.x_low, spec.x_high, n))
    mu = get_model(model_id)(x, np.array(spec.beta_true))
    y = mu + rng.normal(0.0, sd, n) if sd > 0 else mu.copy()
    return x, y


def _check_row(family, link):
    fam, lnk = get_family(family), get_link(link)
    if (fam.name, lnk.name) not in GLM_ROWS:
        raise ValueError(f"{fam.name}/{lnk.name} is not one of the scenario GLM rows")
    return fam.name, lnk.name


def glm_noise(family, mu_center, dependence, cv=None):
    """Family dispersion for a target coefficient of variation at ``mu_center``.

    Returns the Gaussian standard deviation, the gamma dispersion ``1/shape``,
    or the inverse-Gaussian dispersion ``phi`` (variance ``phi * mu**3``).
    """
    cv = NOISE_CV[dependence] if cv is None else cv
    family = get_family(family).name
    if family == "gaussian":
        return cv * mu_center
    if family == "gamma":
        return cv**2
    return cv**2 / mu_center


def _draw_response(family, mu, disp, rng):
    if family == "gaussian":
        return mu + rng.normal(0.0, disp, len(mu))
    if family == "gamma":
        shape = 1.0 / disp
        return rng.gamma(shape, mu / shape)
    return rng.wald(mu, 1.0 / disp)


def _glm_draw(family, link, n, dependence, rng, gap, cv=None):
    family, link = _check_row(family, link)
    lnk = get_link(link)
    b0, b1 = S3_BETA[link]
    lo, hi = S3_X_RANGE
    mid = 0.5 * (lo + hi)
    jump = gap * abs(b1) * (hi - lo)
    mu_center = float(lnk.g_inverse(np.array(b0 + b1 * mid)))
    disp = glm_noise(family, mu_center, dependence, cv)
    for _ in range(_MAX_RETRIES):
        x = np.sort(rng.uniform(lo, hi, n))
        eta = b0 + b1 * x + jump * (x > mid)
        with np.errstate(all="ignore"):
            mu = lnk.g_inverse(eta)
        if np.all(np.isfinite(mu)) and np.all(mu > 0):
            y = _draw_response(family, mu, disp, rng)
            if family == "gaussian" or np.all(y > 0):
                return x, y, mu, np.array([b0, b1])
    raise RuntimeError(f"could not draw a valid {family}/{link} sample in {_MAX_RETRIES} attempts")


def generate_s3(family, link, n, dependence, rng, cv=None):
    """Draw ``(x, y, beta_used)`` for a GLM configuration with x ~ U(0.5, 1.5)."""
    x, y, _, beta = _glm_draw(family, link, n, dependence, rng, 0.0, cv)
    return x, y, beta


def generate_s4_gap(family, link, n, dependence, rng, gap=GAP_FRACTION, cv=None):
    """Like :func:`generate_s3` with the intercept raised by ``gap`` times the
    linear-predictor range for x above the midpoint.  Returns ``(x, y, mu)``."""
    x, y, mu, _ = _glm_draw(family, link, n, dependence, rng, gap, cv)
    return x, y, mu


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    true_model: str
    n: int
    dependence: str = "moderate"
    replications: int = 100
    seed: int = 0
    gap: bool = False
    criteria: tuple = CRITERIA
    noise_reading: str = "sd"
    candidates: Optional[tuple] = None
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    compare_to: str = "mean"
    gap_fraction: float = GAP_FRACTION
    noise_cv: Optional[float] = None

    def __post_init__(self):
        if self.scenario not in ("s1", "s2", "s3", "s4"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if self.dependence not in DEPENDENCE_LEVELS:
            raise ValueError(f"unknown dependence level {self.dependence!r}")
        for c in self.criteria:
            if c not in CRITERIA:
                raise ValueError(f"unknown criterion {c!r}")
        if self.compare_to not in ("mean", "observed"):
            raise ValueError("compare_to must be 'mean' or 'observed'")
        if self.scenario in ("s1", "s2") and self.true_model not in S1_SETTINGS:
            raise ValueError(f"{self.scenario} needs a true model in {sorted(S1_SETTINGS)}")
        if self.scenario in ("s3", "s4"):
            _check_row(*self.glm_row)

    @property
    def glm_row(self):
        fam, _, link = self.true_model.partition(":")
        return fam, link

    def fingerprint(self) -> int:
        key = f"{self.scenario}|{self.true_model}|{self.n}|{self.dependence}|{int(self.gap)}"
        return zlib.crc32(key.encode())

    def candidate_set(self):
        if self.candidates is not None:
            cands = []
            for c in self.candidates:
                if c.startswith("glm:"):
                    _, fam, link = c.split(":")
                    cands.append(glm_candidate(fam, link))
                else:
                    cands.append(nonlinear_candidate(c))
            return cands
        if self.scenario == "s1":
            return [nonlinear_candidate(m) for m in builtin_catalog()]
        if self.scenario == "s2":
            return [nonlinear_candidate("f2"), nonlinear_candidate("f24")]
        fam, _ = self.glm_row
        fam = get_family(fam).name
        return [glm_candidate(f, l) for f, l in GLM_ROWS if f == fam]

    def true_id(self) -> str:
        if self.scenario in ("s1", "s2"):
            return self.true_model
        fam, link = self.glm_row
        return glm_candidate(fam, link).id

    def to_dict(self) -> dict:
        d = asdict(self)
        d["criteria"] = list(self.criteria)
        d["candidates"] = None if self.candidates is None else list(self.candidates)
        return d


@dataclass
class MonteCarloResult:
    config: dict
    completed: int
    failed: int
    true_classification_rate: dict = field(default_factory=dict)
    per_replicate_winner: list = field(default_factory=list)
    null_fraction_table: dict = field(default_factory=dict)
    glm_win_proportion: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    candidates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["null_fraction_table"] = {str(k): v for k, v in self.null_fraction_table.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MonteCarloResult":
        d = dict(d)
        d["null_fraction_table"] = {int(k): v for k, v in d.get("null_fraction_table", {}).items()}
        return cls(**d)


# --- replicates -------------------------------------------------------------


def replicate_rng(config: ScenarioConfig, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence([config.seed & 0xFFFFFFFFFFFFFFFF, config.fingerprint(), rep])
    return np.random.Generator(np.random.Philox(ss))


def run_replicate(config: ScenarioConfig, rep: int) -> dict:
    """One replicate; returns a plain dict (winners or GLM-vs-wavelet outcomes)."""
    rng = replicate_rng(config, rep)
    sc = config.scenario
    if sc in ("s1", "s2"):
        x, y = generate_s1(config.true_model, config.n, config.dependence, rng, config.noise_reading)
    elif sc == "s3":
        fam, link = config.glm_row
        x, y, _ = generate_s3(fam, link, config.n, config.dependence, rng, config.noise_cv)
    else:
        fam, link = config.glm_row
        gap = config.gap_fraction if config.gap else 0.0
        x, y, mu = generate_s4_gap(fam, link, config.n, config.dependence, rng, gap, config.noise_cv)

    X = np.column_stack([np.ones(len(x)), x])
    if sc != "s4":
        report = wp_select(X, y, config.candidate_set(), config.criteria, config.wavelet, keep_series=False)
        return {
            "winner": {c: report.winner(c) for c in config.criteria},
            "nulls": report.wavelet_diagnostics["null_fraction_by_level"],
        }

    fam, link = config.glm_row
    glm_mu = fit_glm(X, y, fam, link).mu
    eta_star, _ = rescaled_linear_predictor(X, y)
    wfit = config.wavelet.fit(eta_star, y)
    target = mu if config.compare_to == "mean" else y
    g_rmse, g_mae = score(glm_mu, target)
    w_rmse, w_mae = score(wfit.fitted, target)
    errors = {"rmse": (g_rmse, w_rmse), "mae": (g_mae, w_mae)}
    return {
        "glm_wins": {c: bool(errors[c][0] < errors[c][1]) for c in config.criteria},
        "nulls": wfit.null_fraction_by_level,
    }


def _run_chunk(args):
    config, reps = args
    out = []
    with warnings.catch_warnings():
        # start-heuristic fallbacks are routine across thousands of replicates
        warnings.simplefilter("ignore", HeuristicWarning)
        for rep in reps:
            try:
                out.append((rep, run_replicate(config, rep), None))
            except (RuntimeError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                out.append((rep, None, f"replicate {rep}: {type(exc).__name__}: {exc}"))
    return out


def run_scenario(config: ScenarioConfig, n_jobs: Optional[int] = None) -> MonteCarloResult:
    """Run all replicates of ``config`` and aggregate them.

    ``n_jobs`` worker processes (default from ``WAVESELECT_THREADS``, else 1).
    The result is identical for any ``n_jobs``.
    """
    n_jobs = thread_count() if n_jobs is None else max(1, int(n_jobs))
    reps = list(range(config.replications))
    if n_jobs == 1 or len(reps) < 2:
        rows = _run_chunk((config, reps))
    else:
        chunks = [(config, reps[i::n_jobs]) for i in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = [r for part in pool.map(_run_chunk, chunks) for r in part]
    rows.sort(key=lambda r: r[0])
    return aggregate(config, rows)


def aggregate(config: ScenarioConfig, rows) -> MonteCarloResult:
    done = [r for _, r, err in rows if err is None]
    failures = [err for _, _, err in rows if err is not None]
    result = MonteCarloResult(
        config=config.to_dict(),
        completed=len(done),
        failed=len(failures),
        failures=failures,
        candidates=[c.id for c in config.candidate_set()] if config.scenario != "s4" else [],
    )
    if done:
        levels = sorted(done[0]["nulls"])
        result.null_fraction_table = {
            int(j): float(np.mean([r["nulls"][j] for r in done])) for j in levels
        }
    if config.scenario == "s4":
        result.per_replicate_winner = [
            {c: ("glm" if r["glm_wins"][c] else "wavelet") for c in config.criteria} for r in done
        ]
        for c in config.criteria:
            wins = sum(r["glm_wins"][c] for r in done)
            result.glm_win_proportion[c] = wins / len(done) if done else None
    else:
        truth = config.true_id()
        result.per_replicate_winner = [dict(r["winner"]) for r in done]
        for c in config.criteria:
            hits = sum(r["winner"][c] == truth for r in done)
            result.true_classification_rate[c] = 100.0 * hits / len(done) if done else None
    return result


def with_overrides(config: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(config, **kw)
