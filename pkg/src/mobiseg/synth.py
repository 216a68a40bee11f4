"""Seeded synthetic city generator with known ground truth, plus brute-force
oracles used by the test and acceptance suites.

The generator lays CBGs on a jittered grid, draws group mixes with tunable
spatial concentration, places POIs with group-affinity coupling, and samples
integer flows from a gravity x POI-affinity x homophily destination-choice
law. The exact law parameters are recorded in GroundTruth so tests can
compare realized flows against expectations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import (
    DEFAULT_POI_TYPES,
    CbgRecord,
    CityDataset,
    GroupSchema,
    MobilityGraph,
    haversine_km,
)
from .errors import InvalidConfig, TooLarge, TooManyFeatures

KM_PER_DEG = math.pi * 6371.0 / 180.0


@dataclass
class SynthConfig:
    seed: int = 0
    n_cbgs: int = 100
    extent_km: float = 20.0
    n_groups: int = 2
    spatial_segregation: float = 0.7     # lambda: 0 = iid mixes, 1 = one-hot blocks
    anchors_per_group: int = 1           # >1 scatters each group over several patches
    homophily: float = 0.5               # h: preference for destinations matching own group
    gravity_alpha: float = 1.0           # origin-mass exponent (scales outflow volume)
    gravity_beta: float = 1.0            # destination-mass exponent
    distance_decay: tuple | float = 2.0  # gamma; scalar or one value per group
    poi_intensity: tuple | None = None   # base density scale per POI type
    group_poi_affinity: np.ndarray | None = None  # (n_groups, n_poi), row-wise preferences
    poi_affinity_strength: float = 1.0   # multiplier on the POI term in destination choice
    poi_placement_coupling: float = 0.8  # how strongly POIs follow their group's residents
    mobility_rate: float = 0.6           # movers per resident
    attribute: str = "income"
    poi_types: tuple = DEFAULT_POI_TYPES

    def __post_init__(self):
        if self.n_cbgs < 4:
            raise InvalidConfig("n_cbgs must be >= 4")
        if self.n_groups < 2:
            raise InvalidConfig("n_groups must be >= 2")
        if not (0.0 <= self.spatial_segregation <= 1.0):
            raise InvalidConfig("spatial_segregation must be in [0, 1]")
        if not (0.0 <= self.homophily <= 1.0):
            raise InvalidConfig("homophily must be in [0, 1]")
        if self.extent_km <= 0 or self.mobility_rate <= 0:
            raise InvalidConfig("extent_km and mobility_rate must be positive")

    def decay_per_group(self) -> np.ndarray:
        d = self.distance_decay
        if np.isscalar(d):
            return np.full(self.n_groups, float(d))
        arr = np.asarray(d, dtype=float)
        if arr.shape != (self.n_groups,):
            raise InvalidConfig("distance_decay must be scalar or one value per group")
        return arr

    def affinity_matrix(self) -> np.ndarray:
        if self.group_poi_affinity is not None:
            a = np.asarray(self.group_poi_affinity, dtype=float)
            if a.shape != (self.n_groups, len(self.poi_types)):
                raise InvalidConfig("group_poi_affinity must be (n_groups, n_poi_types)")
            return a
        # default: each group favors an interleaved subset of POI types
        a = np.zeros((self.n_groups, len(self.poi_types)))
        for p in range(len(self.poi_types)):
            a[p % self.n_groups, p] = 1.0
        return a


@dataclass
class GroundTruth:
    """The exact destination-choice law the flows were sampled from."""

    config: SynthConfig
    positions_km: np.ndarray          # (n, 2)
    theta: np.ndarray                 # (n, n_groups) resident mixes
    homophily_mix: np.ndarray         # (n, n_groups) rho anchoring destination choice
    outflow: np.ndarray               # (n, n_groups) movers per origin and group
    choice_prob: np.ndarray | None    # (n_groups, n, n) P_d(j | i), None when too large

    def expected_flows(self) -> np.ndarray:
        """(n_groups, n, n) expected flow tensor."""
        if self.choice_prob is None:
            raise TooLarge("choice probabilities were not materialized for this size")
        return self.outflow.T[:, :, None] * self.choice_prob


def _largest_remainder(total: int, shares: np.ndarray) -> np.ndarray:
    """Integer apportionment of `total` by fractional shares."""
    raw = shares * total
    base = np.floor(raw).astype(int)
    rem = total - base.sum()
    if rem > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:rem]] += 1
    return base


def generate_city(config: SynthConfig, max_prob_matrix: int = 2000):
    """Build a CityDataset plus its GroundTruth, fully determined by the seed."""
    rng = np.random.default_rng(config.seed)
    n = config.n_cbgs
    g = config.n_groups

    # jittered grid positions in km
    side = math.ceil(math.sqrt(n))
    spacing = config.extent_km / side
    ys, xs = np.divmod(np.arange(n), side)
    pos = np.stack([xs * spacing, ys * spacing], axis=1) + spacing / 2
    pos += rng.uniform(-0.25, 0.25, size=(n, 2)) * spacing

    lat = pos[:, 1] / KM_PER_DEG
    lon = pos[:, 0] / KM_PER_DEG

    # group mixes: blend iid Dirichlet noise with one-hot nearest-anchor patches
    n_anchors = g * max(1, int(config.anchors_per_group))
    if n_anchors == g:
        anchors = np.stack([
            [config.extent_km * (k + 0.5) / g, config.extent_km / 2] for k in range(g)
        ])
        anchor_group = np.arange(g)
    else:
        aside = math.ceil(math.sqrt(n_anchors))
        ay, ax = np.divmod(np.arange(n_anchors), aside)
        anchors = np.stack([(ax + 0.5) * config.extent_km / aside,
                            (ay + 0.5) * config.extent_km / aside], axis=1)
        anchor_group = np.arange(n_anchors) % g
    nearest = np.argmin(
        ((pos[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2), axis=1)
    blocks = np.zeros((n, g))
    blocks[np.arange(n), anchor_group[nearest]] = 1.0
    noise = rng.dirichlet(np.ones(g), size=n)
    lam = config.spatial_segregation
    theta = (1 - lam) * noise + lam * blocks

    population = np.clip(
        np.round(rng.lognormal(math.log(1400), 0.35, size=n)), 600, 3000).astype(int)
    counts = np.vstack([_largest_remainder(population[i], theta[i]) for i in range(n)])
    theta = counts / counts.sum(axis=1, keepdims=True)  # exact mixes after rounding

    # POI densities: base intensity, group-affinity coupling, lognormal noise, sparsity
    n_poi = len(config.poi_types)
    intensity = (np.asarray(config.poi_intensity, dtype=float)
                 if config.poi_intensity is not None else np.full(n_poi, 2.0))
    if intensity.shape != (n_poi,):
        raise InvalidConfig("poi_intensity must have one entry per POI type")
    affinity = config.affinity_matrix()
    alignment = theta @ affinity                      # (n, n_poi)
    poi = intensity * np.exp(
        config.poi_placement_coupling * (alignment - alignment.mean(axis=0)))
    poi *= rng.lognormal(0.0, 0.3, size=(n, n_poi))
    poi[rng.uniform(size=(n, n_poi)) < 0.15] = 0.0    # some amenities simply absent
    poi = np.round(poi, 6)

    # homophily anchor: the destination's own resident mix (group-d movers
    # favor places whose visitors -- approximated by residents -- match them)
    rho = theta.copy()

    # destination-choice law per group
    dist = np.maximum(haversine_km(lat[:, None], lon[:, None], lat[None, :], lon[None, :]), 0.1)
    decay = config.decay_per_group()
    h = config.homophily
    log_pop = np.log(population.astype(float))
    poi_term = np.log1p(poi) @ affinity.T             # (n, n_groups)
    keep_prob = n <= max_prob_matrix
    choice = np.empty((g, n, n)) if keep_prob else None

    outflow_scale = config.mobility_rate * (population / population.mean()) ** (config.gravity_alpha - 1.0)
    outflow = np.vstack([
        _largest_remainder(int(round(outflow_scale[i] * population[i])), theta[i])
        for i in range(n)
    ]).astype(float)

    flows = np.zeros((g, n, n))
    for d in range(g):
        util = (config.gravity_beta * log_pop[None, :]
                - decay[d] * np.log(dist)
                + config.poi_affinity_strength * poi_term[None, :, d]
                + np.log((1 - h) + h * g * rho[None, :, d]))
        np.fill_diagonal(util, -np.inf)
        util -= util.max(axis=1, keepdims=True)
        prob = np.exp(util)
        prob /= prob.sum(axis=1, keepdims=True)
        if keep_prob:
            choice[d] = prob
        for i in range(n):
            ni = int(outflow[i, d])
            if ni > 0:
                flows[d, i] = rng.multinomial(ni, prob[i])

    total = flows.sum(axis=0)
    oi, di = np.nonzero(total)
    ids = [f"s{i:04d}" for i in range(n)]
    edges = [(ids[o], ids[dd], float(total[o, dd])) for o, dd in zip(oi, di)]

    labels = tuple(f"g{k}" for k in range(g))
    cbgs = [
        CbgRecord(
            id=ids[i], population=float(population[i]), lat=float(lat[i]), lon=float(lon[i]),
            group_counts={config.attribute: counts[i].astype(float)},
            poi_density=poi[i].copy(),
        )
        for i in range(n)
    ]
    dataset = CityDataset(
        cbgs, MobilityGraph(edges),
        {config.attribute: GroupSchema(config.attribute, labels)},
        tuple(config.poi_types),
    )
    truth = GroundTruth(config=config, positions_km=pos, theta=theta,
                        homophily_mix=rho, outflow=outflow, choice_prob=choice)
    return dataset, truth


def write_city_csv(dataset: CityDataset, out_dir):
    """Emit the dataset as the documented CSV formats; round-trips exactly."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    attr_names = list(dataset.attributes)
    flows_path = os.path.join(out_dir, "flows.csv")
    demo_path = os.path.join(out_dir, "demographics.csv")
    poi_path = os.path.join(out_dir, "poi.csv")

    with open(flows_path, "w") as f:
        f.write("origin,destination,weight\n")
        for o, d, w in dataset.flows.edges():
            f.write(f"{o},{d},{w!r}\n")

    group_cols = [f"{a}.{lbl}" for a in attr_names for lbl in dataset.attributes[a].labels]
    with open(demo_path, "w") as f:
        f.write("cbg_id,population,lat,lon," + ",".join(group_cols) + "\n")
        for c in dataset.cbgs:
            counts = [str(int(x)) for a in attr_names for x in c.group_counts[a]]
            f.write(f"{c.id},{int(c.population)},{c.lat!r},{c.lon!r}," + ",".join(counts) + "\n")

    with open(poi_path, "w") as f:
        f.write("cbg_id," + ",".join(dataset.poi_types) + "\n")
        for c in dataset.cbgs:
            f.write(c.id + "," + ",".join(repr(float(x)) for x in c.poi_density) + "\n")

    return flows_path, demo_path, poi_path


# --- brute-force oracles ---

def _set_partitions(items):
    """All set partitions, generated by assigning each item to an existing or new block."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def oracle_modularity_optimum(graph: MobilityGraph, resolution: float = 1.0):
    """Exhaustive directed-modularity optimum over all set partitions (<= 8 nodes).

    Modularity is evaluated pairwise straight from its definition, independent
    of the per-community implementation in mobiseg.community.
    """
    nodes = graph.nodes
    if len(nodes) > 8:
        raise TooLarge("exhaustive search is limited to 8 nodes")
    m = graph.total_weight
    if m <= 0:
        raise TooLarge("graph has zero total weight")
    idx = {nd: i for i, nd in enumerate(nodes)}
    n = len(nodes)
    a = np.zeros((n, n))
    for o, d, w in graph.edges():
        a[idx[o], idx[d]] += w
    k_out = a.sum(axis=1)
    k_in = a.sum(axis=0)

    def q_of(blocks):
        q = 0.0
        for block in blocks:
            for x in block:
                for y in block:
                    q += a[idx[x], idx[y]] / m \
                        - resolution * k_out[idx[x]] * k_in[idx[y]] / (m * m)
        return q

    best_q = -math.inf
    best_blocks = None
    for blocks in _set_partitions(list(nodes)):
        q = q_of(blocks)
        if q > best_q:
            best_q = q
            best_blocks = [sorted(b) for b in blocks]
    return best_q, best_blocks


def oracle_exact_shapley(f, instance: np.ndarray, background: np.ndarray) -> np.ndarray:
    """Exact Shapley values by full coalition enumeration with background
    replacement (<= 12 features). `f` maps a 2-d feature matrix to scores."""
    x = np.asarray(instance, dtype=float)
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    m = x.shape[0]
    if m > 12:
        raise TooManyFeatures(f"{m} features exceeds the 12-feature oracle limit")

    def value(subset):
        rows = bg.copy()
        cols = list(subset)
        if cols:
            rows[:, cols] = x[cols]
        return float(np.mean(f(rows)))

    fact = [math.factorial(k) for k in range(m + 1)]
    phi = np.zeros(m)
    features = list(range(m))
    for t in features:
        rest = [u for u in features if u != t]
        for size in range(m):
            weight = fact[size] * fact[m - size - 1] / fact[m]
            for subset in itertools.combinations(rest, size):
                with_t = value(set(subset) | {t})
                without_t = value(set(subset))
                phi[t] += weight * (with_t - without_t)
    return phi
