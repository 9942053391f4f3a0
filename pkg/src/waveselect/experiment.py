"""Experiment plans: YAML configuration, bundled profiles and CSV table output.

A plan file looks like::

    seed: 20240601
    replications: 100
    tables: [classification, null_fractions]
    wavelet: {wavelet: daub4, j0: 3, rule: hard}
    scenarios:
      - scenario: s1
        true_models: [f1, f2, f3, f4]
        dependence: [moderate, strong]
        n: [128, 256, 512]

Top-level run settings act as defaults for every scenario block; a block may
override any of them.  ``true_models: all`` expands to every model (s1/s2) or
every family/link row (s3/s4).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .selection import CRITERIA, WaveletConfig
from .simulation import DEPENDENCE_LEVELS, GLM_ROWS, S1_SETTINGS, SAMPLE_SIZES, MonteCarloResult, ScenarioConfig

__all__ = [
    "ConfigError",
    "ExperimentPlan",
    "TABLES",
    "list_profiles",
    "resolve_config",
    "load_plan",
    "parse_plan",
    "render_tables",
]

TABLES = ("classification", "null_fractions", "win_proportions")

_RUN_KEYS = {
    "seed", "replications", "noise_reading", "criteria", "compare_to", "gap_fraction",
    "noise_cv", "candidates",
}
_TOP_KEYS = _RUN_KEYS | {"scenarios", "tables", "wavelet", "n_jobs", "description"}
_BLOCK_KEYS = _RUN_KEYS | {"scenario", "true_models", "dependence", "n", "gap"}
_WAVELET_KEYS = {"wavelet", "j0", "rule", "max_level", "boundary", "aggregate"}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``keys`` lists offending keys, if any."""

    def __init__(self, message: str, keys=()):
        super().__init__(message)
        self.keys = list(keys)


@dataclass
class ExperimentPlan:
    configs: list
    tables: tuple = TABLES
    n_jobs: Optional[int] = None
    source: dict = field(default_factory=dict)

    def fingerprint(self) -> str:
        """Stable hash of the normalized plan (used as the report's config hash)."""
        blob = json.dumps([c.to_dict() for c in self.configs] + [list(self.tables)], sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def list_profiles() -> list:
    root = resources.files("waveselect") / "profiles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config(name_or_path) -> Path:
    """A filesystem path, or the name of a bundled profile such as ``table2-quick``."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    bundled = resources.files("waveselect") / "profiles" / f"{name_or_path}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"no config file or bundled profile named {str(name_or_path)!r}; profiles: {list_profiles()}")


def load_plan(name_or_path) -> ExperimentPlan:
    path = resolve_config(name_or_path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return parse_plan(raw)


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _unknown_keys(raw) -> list:
    """Every unrecognized key, prefixed with where it was found."""
    bad = [k for k in sorted(raw) if k not in _TOP_KEYS]
    if isinstance(raw.get("wavelet"), dict):
        bad += [f"wavelet.{k}" for k in sorted(raw["wavelet"]) if k not in _WAVELET_KEYS]
    blocks = raw.get("scenarios")
    if isinstance(blocks, list):
        for i, block in enumerate(blocks):
            if isinstance(block, dict):
                bad += [f"scenarios[{i}].{k}" for k in sorted(block) if k not in _BLOCK_KEYS]
    return bad


def _expand_models(scenario, models):
    if models == "all" or models == ["all"]:
        return sorted(S1_SETTINGS) if scenario in ("s1", "s2") else [f"{f}:{l}" for f, l in GLM_ROWS]
    return [str(m) for m in _as_list(models)]


def parse_plan(raw) -> ExperimentPlan:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    bad = _unknown_keys(raw)
    if bad:
        raise ConfigError(f"unknown config keys: {', '.join(bad)}", bad)
    blocks = raw.get("scenarios")
    if not blocks:
        raise ConfigError("config lists no scenarios", ["scenarios"])
    tables = tuple(_as_list(raw.get("tables", TABLES)))
    bad = [t for t in tables if t not in TABLES]
    if bad:
        raise ConfigError(f"unknown tables: {', '.join(bad)}", bad)

    wav = raw.get("wavelet", {}) or {}
    if not isinstance(wav, dict):
        raise ConfigError("'wavelet' must be a mapping", ["wavelet"])
    try:
        wavelet = WaveletConfig(**wav)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"wavelet: {exc}", ["wavelet"]) from None
    defaults = {k: raw[k] for k in _RUN_KEYS if k in raw}

    configs = []
    for i, block in enumerate(blocks):
        if not isinstance(block, dict):
            raise ConfigError(f"scenario entry {i} must be a mapping")
        if "scenario" not in block:
            raise ConfigError(f"scenario entry {i} has no 'scenario'", ["scenario"])
        sc = block["scenario"]
        merged = {**defaults, **block}
        models = _expand_models(sc, merged.get("true_models", "f2" if sc == "s2" else "all"))
        deps = _as_list(merged.get("dependence", list(DEPENDENCE_LEVELS)))
        sizes = _as_list(merged.get("n", list(SAMPLE_SIZES)))
        gaps = _as_list(merged.get("gap", False))
        common = dict(
            replications=int(merged.get("replications", 100)),
            seed=int(merged.get("seed", 0)),
            criteria=tuple(_as_list(merged.get("criteria", list(CRITERIA)))),
            noise_reading=merged.get("noise_reading", "sd"),
            compare_to=merged.get("compare_to", "mean"),
            wavelet=wavelet,
        )
        if "gap_fraction" in merged:
            common["gap_fraction"] = float(merged["gap_fraction"])
        if merged.get("noise_cv") is not None:
            common["noise_cv"] = float(merged["noise_cv"])
        if merged.get("candidates") is not None:
            common["candidates"] = tuple(str(c) for c in _as_list(merged["candidates"]))
        for model in models:
            for dep in deps:
                for gap in gaps:
                    for n in sizes:
                        try:
                            configs.append(
                                ScenarioConfig(sc, model, int(n), dep, gap=bool(gap), **common)
                            )
                        except (ValueError, TypeError) as exc:
                            raise ConfigError(f"scenario entry {i}: {exc}") from None
    n_jobs = raw.get("n_jobs")
    return ExperimentPlan(configs, tables, None if n_jobs is None else int(n_jobs), raw)


# --- tables -----------------------------------------------------------------


def _fmt(v, digits):
    return "" if v is None or v != v else f"{v:.{digits}f}"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _row_key(cfg):
    return (cfg["scenario"], cfg["true_model"], cfg["dependence"], int(cfg["gap"]))


def _wide(results, value_of, digits, include_gap):
    """Rows keyed by configuration, one column per (criterion, n)."""
    cells, order, columns = {}, [], []
    for res in results:
        cfg = res.config
        key = _row_key(cfg)
        if key not in cells:
            cells[key] = {}
            order.append(key)
        for crit, value in value_of(res).items():
            col = f"{crit}_n{cfg['n']}"
            cells[key][col] = value
            if col not in columns:
                columns.append(col)
    columns.sort(key=lambda c: (CRITERIA.index(c.split("_n")[0]), int(c.split("_n")[1])))
    head = ["scenario", "true_model", "dependence"] + (["gap"] if include_gap else []) + columns
    rows = []
    for key in order:
        sc, model, dep, gap = key
        rows.append([sc, model, dep] + ([gap] if include_gap else []) + [_fmt(cells[key].get(c), digits) for c in columns])
    return _csv(rows, head)


def render_tables(results, tables=TABLES) -> dict:
    """CSV text per requested table; tables without matching results are skipped."""
    out = {}
    cls = [r for r in results if r.config["scenario"] != "s4"]
    s4 = [r for r in results if r.config["scenario"] == "s4"]
    if "classification" in tables and cls:
        out["classification"] = _wide(cls, lambda r: r.true_classification_rate, 1, False)
    if "win_proportions" in tables and s4:
        out["win_proportions"] = _wide(s4, lambda r: r.glm_win_proportion, 3, True)
    if "null_fractions" in tables and results:
        levels = sorted({j for r in results for j in r.null_fraction_table})
        head = ["scenario", "true_model", "dependence", "gap", "n"] + [f"level_{j}" for j in levels]
        rows = []
        for r in results:
            c = r.config
            rows.append(
                [c["scenario"], c["true_model"], c["dependence"], int(c["gap"]), c["n"]]
                + [_fmt(100 * r.null_fraction_table[j], 1) if j in r.null_fraction_table else "" for j in levels]
            )
        out["null_fractions"] = _csv(rows, head)
    return out


def results_to_json(results, metadata: dict) -> str:
    doc = {"metadata": metadata, "kind": "monte_carlo", "results": [r.to_dict() for r in results]}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False, default=_nan_free) + "\n"


def _nan_free(obj):
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def results_from_json(text: str):
    doc = json.loads(text)
    if doc.get("kind") != "monte_carlo":
        raise ValueError("not a Monte Carlo report")
    return doc["metadata"], [MonteCarloResult.from_dict(r) for r in doc["results"]]
