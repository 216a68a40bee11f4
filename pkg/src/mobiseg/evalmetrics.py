"""Flow-prediction quality metrics and the population-decile breakdown."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BothZero, ConstantVector, NegativeEntry, TooFewCbgs


def cpc(pred, actual) -> float:
    """Common part of commuters: overlap ratio of two non-negative flow vectors."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError("pred and actual must have the same length")
    if np.any(pred < 0) or np.any(actual < 0):
        raise NegativeEntry("flow vectors must be non-negative")
    denom = pred.sum() + actual.sum()
    if denom == 0:
        raise BothZero("both flow vectors are all-zero")
    return float(2.0 * np.minimum(pred, actual).sum() / denom)


def jsd(p, q) -> float:
    """Jensen-Shannon divergence (natural log); inputs are normalized first."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0) or np.any(q < 0):
        raise NegativeEntry("distributions must be non-negative")
    if p.sum() == 0 or q.sum() == 0:
        raise BothZero("cannot normalize an all-zero vector")
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float((a[mask] * np.log(a[mask] / b[mask])).sum())

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def pearson(pred, actual) -> float:
    """Product-moment correlation between two vectors of length >= 2."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if len(pred) < 2 or pred.shape != actual.shape:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    dp = pred - pred.mean()
    da = actual - actual.mean()
    sp = float((dp * dp).sum())
    sa = float((da * da).sum())
    if sp == 0 or sa == 0:
        raise ConstantVector("correlation undefined for constant vectors")
    return float((dp * da).sum() / np.sqrt(sp * sa))


def rmse_nrmse(pred, actual):
    """(rmse, nrmse); nrmse is None when actual has zero range."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or len(pred) < 1:
        raise ValueError("need two equal-length non-empty vectors")
    rmse = float(np.sqrt(np.mean((pred - actual) ** 2)))
    rng = float(actual.max() - actual.min())
    if rng == 0:
        return rmse, None
    return rmse, rmse / rng


def score_predictions(pred, actual) -> dict:
    """All five metrics for one prediction/actual pair of flow vectors."""
    r, nr = rmse_nrmse(pred, actual)
    return {
        "cpc": cpc(pred, actual),
        "jsd": jsd(pred, actual),
        "pearson": pearson(pred, actual),
        "rmse": r,
        "nrmse": nr,
    }


def population_decile_bins(populations) -> list[np.ndarray]:
    """Split CBG indices into 10 equal-count bins by ascending population.

    Decile 1 holds the least-populated CBGs; when the count is not divisible
    by 10, the lower deciles take the extra members.
    """
    populations = np.asarray(populations, dtype=float)
    n = len(populations)
    if n < 10:
        raise TooFewCbgs(f"need at least 10 CBGs for deciles, got {n}")
    order = np.argsort(populations, kind="stable")
    base, rem = divmod(n, 10)
    bins = []
    start = 0
    for k in range(10):
        size = base + (1 if k < rem else 0)
        bins.append(order[start:start + size])
        start += size
    return bins


def decile_report(populations, pred_by_cbg, actual_by_cbg) -> list[float]:
    """Per-decile CPC: CBGs are binned by population, and CPC is computed over
    the concatenated prediction/actual pairs of each bin's CBGs."""
    bins = population_decile_bins(populations)
    out = []
    for idx in bins:
        pred = np.concatenate([np.asarray(pred_by_cbg[i], dtype=float) for i in idx])
        actual = np.concatenate([np.asarray(actual_by_cbg[i], dtype=float) for i in idx])
        out.append(cpc(pred, actual))
    return out


@dataclass
class MetricReport:
    """Per-run metric rows plus run means and the decile breakdown."""

    rows: list = field(default_factory=list)     # {variant, run, cpc, jsd, pearson, rmse, nrmse}
    means: list = field(default_factory=list)    # {variant, cpc, jsd, pearson, rmse, nrmse}
    deciles: list = field(default_factory=list)  # {variant, decile, cpc}

    METRIC_KEYS = ("cpc", "jsd", "pearson", "rmse", "nrmse")

    def add_runs(self, variant: str, per_run: list[dict]):
        for run, metrics in enumerate(per_run):
            self.rows.append({"variant": variant, "run": run, **metrics})
        mean = {"variant": variant}
        for k in self.METRIC_KEYS:
            vals = [m[k] for m in per_run if m[k] is not None]
            mean[k] = float(np.mean(vals)) if vals else None
        self.means.append(mean)

    def add_deciles(self, variant: str, decile_cpcs: list[float]):
        for d, value in enumerate(decile_cpcs, start=1):
            self.deciles.append({"variant": variant, "decile": d, "cpc": value})

    def mean_for(self, variant: str) -> dict:
        for m in self.means:
            if m["variant"] == variant:
                return m
        raise KeyError(variant)

    def metrics_csv(self) -> str:
        lines = ["variant,run,cpc,jsd,pearson,rmse,nrmse"]
        for r in self.rows:
            lines.append(",".join([r["variant"], str(r["run"])]
                                  + [_fmt(r[k]) for k in self.METRIC_KEYS]))
        for m in self.means:
            lines.append(",".join([m["variant"], "mean"]
                                  + [_fmt(m[k]) for k in self.METRIC_KEYS]))
        return "\n".join(lines) + "\n"

    def deciles_csv(self) -> str:
        lines = ["variant,decile,cpc"]
        for r in self.deciles:
            lines.append(f"{r['variant']},{r['decile']},{_fmt(r['cpc'])}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {"v": 1, "rows": self.rows, "means": self.means, "deciles": self.deciles}


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))
