"""Convergence experiments: distances from generated trees to limit candidates."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

from .generators import FAMILIES, generate, named_tree
from .measures import DiscreteMeasure, _flatten_numbers
from .metrics import aw_dist, cw_dist, optimal_stopping_value, scw_dist, w_dist
from .process import ProcessTree, hellwig_distance, markov_statistic_distance, path_law
from .weak import v_sym

__all__ = [
    "METRICS",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ConvergenceReport",
    "metric_value",
    "run_convergence_experiment",
    "verdicts_from_rows",
    "read_csv",
]

METRICS = ("w", "cw", "scw", "aw", "vsym", "os", "hellwig", "markov-n")
CSV_COLUMNS = ("family", "k", "metric", "p", "limit_id", "value", "runtime_ms")

_GEOMETRIC = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000,
              20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000]

_DEFAULTS = {
    "leaky-bet": {"grid": list(range(1, 21)), "limits": ["E1", "E2"], "metrics": ["w", "aw"]},
    "markov-perturbation": {"grid": _GEOMETRIC, "limits": ["base"], "metrics": ["markov-n", "aw"]},
    "random-walk-quantization": {"grid": [1, 2, 3, 4, 5], "limits": ["finest"], "metrics": ["w", "aw"]},
    "custom-file-sequence": {"grid": None, "limits": [], "metrics": ["w", "aw"]},
}


@dataclass
class ExperimentConfig:
    """One convergence experiment.

    ``limits`` holds identifiers of the limit candidates: ``E1``/``E2``/``E3``
    for the fixtures, ``base`` for the unperturbed Markov tree, ``finest``
    for the last grid member, or a path to a tree file.  A metric converges
    to a limit when its value at the last grid point is at most
    ``threshold`` and the last ``tail`` values are nonincreasing.
    """

    family: str
    grid: Optional[list] = None
    metrics: Optional[list] = None
    p: float = 1
    limits: Optional[list] = None
    threshold: float = 1e-6
    tail: int = 3
    seed: int = 42
    params: dict = field(default_factory=dict)
    output: Optional[str] = None
    timing: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        defaults = _DEFAULTS[self.family]
        if self.grid is None:
            if self.family == "custom-file-sequence":
                self.grid = list(range(1, len(self.params.get("files", [])) + 1))
            else:
                self.grid = list(defaults["grid"])
        if self.metrics is None:
            self.metrics = list(defaults["metrics"])
        if self.limits is None:
            self.limits = list(defaults["limits"])
        if not self.grid:
            raise ValueError("the parameter grid is empty")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ValueError(f"unknown metrics {bad}")
        if not self.limits:
            raise ValueError("no limit candidates")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        doc.pop("version", None)
        files = doc.pop("files", None)
        if files is not None:
            doc.setdefault("params", {})
            doc["params"] = dict(doc["params"], files=list(files))
        return cls(**doc)


def _limit_tree(cfg: ExperimentConfig, limit_id: str) -> ProcessTree:
    if limit_id in ("E1", "E2", "E3"):
        return named_tree(limit_id)
    if limit_id == "base":
        if cfg.family != "markov-perturbation":
            raise ValueError("limit 'base' only exists for markov-perturbation")
        from .generators import markov_tree

        return markov_tree(cfg.seed, **cfg.params)
    if limit_id == "finest":
        return generate(cfg.family, max(cfg.grid), cfg.params, cfg.seed)
    from .serialization import load_tree

    return load_tree(limit_id)


def _flat_law(x: ProcessTree) -> DiscreteMeasure:
    law = path_law(x)
    return DiscreteMeasure(tuple(tuple(_flatten_numbers(a)) for a in law.atoms), law.weights)


def stopping_cost(t: int, history: tuple) -> float:
    """Cost of stopping at time ``t``: the current first coordinate.

    It is 1-Lipschitz in the path for the additive path metric.
    """
    return float(history[-1][0])


def metric_value(metric: str, x: ProcessTree, limit: ProcessTree, p=1, params: Optional[dict] = None) -> float:
    """Distance of ``x`` to ``limit`` under ``metric``."""
    params = params or {}
    if metric == "w":
        return float(w_dist(x, limit, p).value)
    if metric == "cw":
        return float(cw_dist(x, limit, p).value)
    if metric == "scw":
        return float(scw_dist(x, limit, p))
    if metric == "aw":
        return float(aw_dist(x, limit, p).value)
    if metric == "vsym":
        return float(v_sym(_flat_law(x), _flat_law(limit), p))
    if metric == "os":
        return abs(float(optimal_stopping_value(x, stopping_cost))
                   - float(optimal_stopping_value(limit, stopping_cost)))
    if metric == "hellwig":
        return float(hellwig_distance(x, limit))
    if metric == "markov-n":
        return float(markov_statistic_distance(x, limit, params.get("n", 1)))
    raise ValueError(f"unknown metric {metric!r}")


def _evaluate(cfg: ExperimentConfig, k: int) -> list:
    x = generate(cfg.family, k, cfg.params, cfg.seed)
    rows = []
    for limit_id in cfg.limits:
        limit = _limit_tree(cfg, limit_id)
        for metric in cfg.metrics:
            t0 = time.perf_counter()
            try:
                value = metric_value(metric, x, limit, cfg.p, cfg.params)
            except Exception as err:
                raise RuntimeError(f"{metric} failed for {cfg.family} k={k} vs {limit_id}: {err}") from err
            ms = (time.perf_counter() - t0) * 1000.0 if cfg.timing else 0.0
            rows.append({"family": cfg.family, "k": k, "metric": metric, "p": cfg.p,
                         "limit_id": limit_id, "value": value, "runtime_ms": ms})
    return rows


def verdicts_from_rows(rows: list, threshold: float = 1e-6, tail: int = 3) -> dict:
    """``{(metric, limit_id): converges}`` computed from result rows alone."""
    series: dict = {}
    for r in sorted(rows, key=lambda r: int(r["k"])):
        series.setdefault((r["metric"], r["limit_id"]), []).append(float(r["value"]))
    out = {}
    for key, vals in series.items():
        last = vals[-tail:]
        monotone = all(b <= a + 1e-12 for a, b in zip(last, last[1:]))
        out[key] = bool(vals[-1] <= threshold and monotone)
    return out


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    rows: list
    verdicts: dict

    def limits_of(self, metric: str) -> list:
        return [lim for (m, lim), ok in sorted(self.verdicts.items()) if m == metric and ok]

    @property
    def summary(self) -> str:
        parts = []
        metrics = list(dict.fromkeys(r["metric"] for r in self.rows))
        for m in metrics:
            lims = self.limits_of(m)
            parts.append(f"{m.upper()}-limit {'/'.join(lims) if lims else 'none'}")
        text = ", ".join(parts)
        if "w" in metrics and "aw" in metrics:
            same = self.limits_of("w") == self.limits_of("aw")
            text += "; W-limit = AW-limit" if same else "; W-limit ≠ AW-limit"
        return text

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([r["family"], r["k"], r["metric"], r["p"], r["limit_id"],
                             repr(float(r["value"])), repr(float(r["runtime_ms"]))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"config": asdict(self.config), "rows": self.rows,
                "verdicts": [{"metric": m, "limit_id": lim, "converges": ok}
                             for (m, lim), ok in sorted(self.verdicts.items())],
                "summary": self.summary}

    def write(self, prefix: str) -> None:
        """Write ``prefix.csv`` and ``prefix.json``."""
        with open(prefix + ".csv", "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())
        with open(prefix + ".json", "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)


def _job(args):
    cfg, k = args
    return _evaluate(cfg, k)


def run_convergence_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ConvergenceReport:
    """Evaluate every metric from every grid member to every limit.

    Grid points run in up to ``jobs`` worker processes; rows are assembled
    in grid order, so the output does not depend on ``jobs``.
    """
    grid = list(cfg.grid)
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_job, [(cfg, k) for k in grid]))
    else:
        chunks = [_evaluate(cfg, k) for k in grid]
    rows = [r for chunk in chunks for r in chunk]
    report = ConvergenceReport(cfg, rows, verdicts_from_rows(rows, cfg.threshold, cfg.tail))
    if cfg.output:
        report.write(cfg.output)
    return report


def read_csv(path: str) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
