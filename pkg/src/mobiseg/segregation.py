"""Segregation index, bridging index, and TOPSIS dual-attribute ranking.

All functions are pure; gaps in the demographic data (zero-count CBGs)
are excluded from the sums rather than imputed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CityDataset, ProportionMatrix, haversine_km
from .errors import InsufficientNeighbors, NoInflow, NotAProbabilityVector


@dataclass(frozen=True)
class VisitorMix:
    """Flow-weighted group mix of a CBG's visitors."""

    target: str
    attribute: str
    pi: np.ndarray
    total_inflow: float


@dataclass(frozen=True)
class CbgScore:
    cbg: str
    si: float
    bi: float
    visitor_mix: VisitorMix
    neighbor_mix: np.ndarray
    topsis_closeness: float

    def to_json_dict(self) -> dict:
        return {
            "cbg": self.cbg,
            "si": self.si,
            "bi": self.bi,
            "closeness": self.topsis_closeness,
            "pi": [float(x) for x in self.visitor_mix.pi],
            "pi_prime": [float(x) for x in self.neighbor_mix],
        }


def visitor_mix(dataset: CityDataset, theta: ProportionMatrix, target: str) -> VisitorMix:
    """Group mix of inbound flow to `target`; origins with undefined
    proportions are excluded from numerator and denominator alike."""
    origin_idx, weights = dataset.inflow_edges(target)
    if len(origin_idx) == 0:
        raise NoInflow(target)
    keep = theta.defined[origin_idx] & (weights > 0)
    origin_idx, weights = origin_idx[keep], weights[keep]
    total = float(weights.sum())
    if total <= 0:
        raise NoInflow(target)
    pi = (theta.values[origin_idx] * weights[:, None]).sum(axis=0) / total
    return VisitorMix(target=target, attribute=theta.attribute, pi=pi, total_inflow=total)


def segregation_index(pi, n: int | None = None) -> float:
    """Normalized unevenness of a probability vector: 0 = even, 1 = one-hot."""
    pi = np.asarray(pi, dtype=float)
    n = len(pi) if n is None else n
    if n != len(pi) or n < 2:
        raise NotAProbabilityVector(f"need n = len(pi) >= 2, got n={n}, len={len(pi)}")
    if np.any(pi < -1e-12) or abs(pi.sum() - 1.0) > 1e-9:
        raise NotAProbabilityVector(f"entries must be >= 0 and sum to 1, got sum={pi.sum()}")
    return float(n / (2 * n - 2) * np.abs(pi - 1.0 / n).sum())


def nearest_neighbors(dataset: CityDataset, target: str, k: int,
                      eligible: np.ndarray) -> np.ndarray:
    """Indices of the k nearest eligible CBGs to `target` (target excluded).

    Ties are resolved by dataset order, which is deterministic.
    """
    t = dataset.index[target]
    mask = eligible.copy()
    mask[t] = False
    cand = np.flatnonzero(mask)
    if len(cand) < k:
        raise InsufficientNeighbors(
            f"need {k} eligible neighbors for {target!r}, found {len(cand)}")
    d = haversine_km(dataset.lat[cand], dataset.lon[cand], dataset.lat[t], dataset.lon[t])
    order = np.argsort(d, kind="stable")[:k]
    return cand[order]


def bridging_index(dataset: CityDataset, theta: ProportionMatrix, target: str,
                   k_bridge: int = 20):
    """(BI, neighbor mix) over the k nearest CBGs with defined proportions and
    positive population; the target itself is excluded from the set."""
    eligible = theta.defined & (dataset.population > 0)
    nbr = nearest_neighbors(dataset, target, k_bridge, eligible)
    pops = dataset.population[nbr]
    pi_prime = (theta.values[nbr] * pops[:, None]).sum(axis=0) / pops.sum()
    n = theta.values.shape[1]
    bi = 1.0 - segregation_index(pi_prime, n)
    return float(bi), pi_prime


def topsis_rank(scores) -> list[tuple[int, float]]:
    """Rank (si, bi) pairs by TOPSIS closeness, descending.

    Vector normalization per column, equal weights, Euclidean distances to the
    per-column ideal (max) and anti-ideal (min). Degenerate columns (all values
    equal) contribute nothing to either distance; all-degenerate gives 0.5.
    Returns (input index, closeness) pairs; ties keep input order, so callers
    should pass candidates sorted by CBG id.
    """
    matrix = np.asarray([[s, b] for s, b in scores], dtype=float)
    if matrix.size == 0:
        raise ValueError("scores must be non-empty")
    norms = np.linalg.norm(matrix, axis=0)
    normed = np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)
    weighted = normed * 0.5
    live = weighted.max(axis=0) - weighted.min(axis=0) > 0
    ideal = weighted.max(axis=0)
    anti = weighted.min(axis=0)
    d_plus = np.sqrt((((weighted - ideal)[:, live]) ** 2).sum(axis=1))
    d_minus = np.sqrt((((weighted - anti)[:, live]) ** 2).sum(axis=1))
    denom = d_plus + d_minus
    closeness = np.where(denom > 0, d_minus / np.where(denom > 0, denom, 1.0), 0.5)
    order = sorted(range(len(closeness)), key=lambda i: (-closeness[i], i))
    return [(i, float(closeness[i])) for i in order]


def score_cbgs(dataset: CityDataset, theta: ProportionMatrix, cbg_ids,
               k_bridge: int = 20) -> list[CbgScore]:
    """Ranked CbgScore rows for the given CBGs (typically one community).

    CBGs without any valid inflow are skipped: their segregation index is
    undefined, so they cannot be ranked.
    """
    rows = []
    for cid in sorted(cbg_ids):
        try:
            mix = visitor_mix(dataset, theta, cid)
        except NoInflow:
            continue
        si = segregation_index(mix.pi)
        bi, pi_prime = bridging_index(dataset, theta, cid, k_bridge)
        rows.append((cid, si, bi, mix, pi_prime))
    if not rows:
        return []
    ranked = topsis_rank([(si, bi) for _, si, bi, _, _ in rows])
    return [
        CbgScore(cbg=rows[i][0], si=rows[i][1], bi=rows[i][2],
                 visitor_mix=rows[i][3], neighbor_mix=rows[i][4],
                 topsis_closeness=closeness)
        for i, closeness in ranked
    ]
