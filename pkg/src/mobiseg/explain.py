"""Shapley-value attribution of flow-model scores over a clustered background.

The estimator is permutation sampling with background replacement: for each
sampled permutation a background row morphs slot-by-slot into the explained
instance, and the per-slot marginal changes average into phi. Instances with
at most 12 slots take an exact full-enumeration path instead. After sampling,
the gap to exact local accuracy (f(x) minus the mean background score) is
redistributed across slots proportionally to |phi| so displayed values always
sum correctly; metadata discloses the adjustment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFeatures, EmptyReports, SchemaMismatch

EXACT_MAX_SLOTS = 12


@dataclass
class BackgroundSet:
    """K-means centroids of (standardized) training feature rows."""

    centroids: np.ndarray
    k: int
    seed: int
    inertia: float

    @property
    def n(self) -> int:
        return len(self.centroids)

    def to_json_dict(self):
        return {"k": self.k, "seed": self.seed, "inertia": self.inertia,
                "centroids": [[float(v) for v in row] for row in self.centroids]}

    @classmethod
    def from_json_dict(cls, doc):
        return cls(np.array(doc["centroids"], dtype=float), doc["k"],
                   doc["seed"], doc["inertia"])


def _kmeans_pp_seeds(rows: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared-distance weighting."""
    n = len(rows)
    first = int(rng.integers(n))
    centroids = [rows[first]]
    d2 = ((rows - rows[first]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(rows[idx])
        d2 = np.minimum(d2, ((rows - rows[idx]) ** 2).sum(axis=1))
    return np.array(centroids)


def kmeans_background(features: np.ndarray, k: int = 50, seed: int = 0,
                      max_iter: int = 100) -> BackgroundSet:
    """Lloyd's algorithm with k-means++ seeding; deterministic for a seed.

    With k or fewer rows the rows themselves are the centroids.
    """
    rows = np.atleast_2d(np.asarray(features, dtype=float))
    if rows.size == 0 or len(rows) == 0:
        raise EmptyFeatures("need at least one feature row")
    if len(rows) <= k:
        inertia = 0.0
        return BackgroundSet(rows.copy(), k=k, seed=seed, inertia=inertia)

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_seeds(rows, k, rng)
    labels = np.zeros(len(rows), dtype=int)
    for _ in range(max_iter):
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = rows[new_labels == c]
            if len(members):
                new_centroids[c] = members.mean(axis=0)
            else:  # re-seed an empty cluster at the farthest point
                far = int(d2.min(axis=1).argmax())
                new_centroids[c] = rows[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels) and np.allclose(new_centroids, centroids):
            break
        centroids, labels = new_centroids, new_labels
    inertia = float(((rows - centroids[labels]) ** 2).sum())
    return BackgroundSet(centroids, k=k, seed=seed, inertia=inertia)


def kmeans_inertia(rows: np.ndarray, centroids: np.ndarray) -> float:
    d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


@dataclass
class ShapValues:
    """Per-slot attributions for one explained instance."""

    phi: np.ndarray
    base_value: float        # mean model output over the background
    prediction: float        # model output at the instance
    exact: bool
    samples: int
    residual_redistributed: float

    def to_json_dict(self):
        return {"phi": [float(v) for v in self.phi],
                "base_value": self.base_value, "prediction": self.prediction,
                "exact": self.exact, "samples": self.samples,
                "residual_redistributed": self.residual_redistributed}


def _exact_shapley(f, x: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """Exact Shapley by bitmask enumeration, batched over background rows."""
    m = len(x)
    n_masks = 1 << m
    b = len(bg)
    rows = np.repeat(bg, n_masks, axis=0).reshape(b, n_masks, m)
    masks = np.arange(n_masks)
    take = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)  # (n_masks, m)
    rows[:, take] = np.broadcast_to(x, (b, n_masks, m))[:, take]
    values = np.asarray(f(rows.reshape(b * n_masks, m)), dtype=float).reshape(b, n_masks)
    v = values.mean(axis=0)  # v(S) for every coalition mask

    import math
    sizes = take.sum(axis=1)
    fact = np.array([math.factorial(i) for i in range(m + 1)], dtype=float)
    phi = np.zeros(m)
    for t in range(m):
        bit = 1 << t
        without = np.flatnonzero((masks & bit) == 0)
        s = sizes[without]
        weights = fact[s] * fact[m - s - 1] / fact[m]
        phi[t] = float((weights * (v[without | bit] - v[without])).sum())
    return phi


def shapley_values(f, instance: np.ndarray, background: BackgroundSet,
                   samples: int = 128, seed: int = 0,
                   expected_slots: int | None = None, mode: str = "auto") -> ShapValues:
    """Attribute f(instance) - E_background[f] across feature slots.

    f maps a (rows, slots) matrix to a score vector. Uses exact enumeration
    for <= 12 slots, permutation sampling otherwise; `mode` can force either
    path ("exact" is refused above 12 slots).
    """
    x = np.asarray(instance, dtype=float)
    bg = background.centroids
    if x.ndim != 1 or x.shape[0] != bg.shape[1]:
        raise SchemaMismatch(f"instance with {bg.shape[1]} slots", f"shape {x.shape}")
    if expected_slots is not None and len(x) != expected_slots:
        raise SchemaMismatch(f"{expected_slots} slots", len(x))
    if mode not in ("auto", "exact", "sampling"):
        raise ValueError("mode must be auto, exact, or sampling")
    m = len(x)
    if mode == "exact" and m > EXACT_MAX_SLOTS:
        raise SchemaMismatch(f"<= {EXACT_MAX_SLOTS} slots for exact mode", m)
    prediction = float(np.asarray(f(x[None, :]))[0])
    base = float(np.mean(np.asarray(f(bg))))

    if mode != "sampling" and m <= EXACT_MAX_SLOTS:
        phi = _exact_shapley(f, x, bg)
        return ShapValues(phi=phi, base_value=base, prediction=prediction,
                          exact=True, samples=0, residual_redistributed=0.0)

    rng = np.random.default_rng(seed)
    # antithetic pairs: each drawn permutation is followed by its reverse,
    # which cancels much of the coalition-size noise
    perm_list = []
    while len(perm_list) < samples:
        p = rng.permutation(m)
        perm_list.append(p)
        if len(perm_list) < samples:
            perm_list.append(p[::-1])
    perms = np.array(perm_list)
    bg_pick = bg[np.arange(samples) % len(bg)]

    # rows[s, j] = background s with the first j features of perm s replaced
    pos = np.argsort(perms, axis=1)                      # slot -> position in perm
    take = pos[:, None, :] < np.arange(m + 1)[None, :, None]
    rows = np.where(take, x[None, None, :], bg_pick[:, None, :])
    values = np.asarray(f(rows.reshape(samples * (m + 1), m)), dtype=float)
    values = values.reshape(samples, m + 1)
    marginals = np.diff(values, axis=1)  # (samples, m) in permutation order
    phi = np.zeros(m)
    for s in range(samples):
        phi[perms[s]] += marginals[s]
    phi /= samples

    target = prediction - base
    residual = target - float(phi.sum())
    mag = np.abs(phi).sum()
    if mag > 1e-12:
        phi = phi + residual * np.abs(phi) / mag
    else:
        phi = phi + residual / m
    return ShapValues(phi=phi, base_value=base, prediction=prediction,
                      exact=False, samples=samples,
                      residual_redistributed=float(residual))


@dataclass
class ShapReport:
    """Aggregated attributions per social group, plus slot orderings."""

    slot_names: list
    groups: dict                  # group -> {origin_id: ShapValues}
    mean: dict = field(default_factory=dict)   # group -> np.ndarray per slot
    std: dict = field(default_factory=dict)
    cross_group_variance: np.ndarray | None = None
    order_by_magnitude: list = field(default_factory=list)
    order_by_variance: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "v": 1,
            "groups": [
                {
                    "group": g,
                    "slots": [
                        {
                            "name": name,
                            "mean": float(self.mean[g][t]),
                            "std": float(self.std[g][t]),
                            "instance_values": {
                                origin: float(sv.phi[t])
                                for origin, sv in self.groups[g].items()
                            },
                        }
                        for t, name in enumerate(self.slot_names)
                    ],
                }
                for g in self.groups
            ],
            "order_by_magnitude": self.order_by_magnitude,
            "order_by_variance": self.order_by_variance,
        }


def aggregate_shap(per_group: dict, slot_names) -> ShapReport:
    """Mean/std per slot per group, cross-group variance of the means, and the
    two display orderings (by total magnitude and by cross-group variance)."""
    if not per_group or any(not v for v in per_group.values()):
        raise EmptyReports("need at least one attribution per group")
    slot_names = list(slot_names)
    report = ShapReport(slot_names=slot_names, groups=per_group)
    for g, by_origin in per_group.items():
        mat = np.vstack([sv.phi for sv in by_origin.values()])
        if mat.shape[1] != len(slot_names):
            raise SchemaMismatch(f"{len(slot_names)} slots", mat.shape[1])
        report.mean[g] = mat.mean(axis=0)
        report.std[g] = mat.std(axis=0)
    means = np.vstack([report.mean[g] for g in per_group])
    report.cross_group_variance = means.var(axis=0)
    magnitude = np.abs(means).sum(axis=0)
    report.order_by_magnitude = [
        slot_names[t] for t in sorted(range(len(slot_names)),
                                      key=lambda t: (-magnitude[t], t))]
    report.order_by_variance = [
        slot_names[t] for t in sorted(range(len(slot_names)),
                                      key=lambda t: (-report.cross_group_variance[t], t))]
    return report
