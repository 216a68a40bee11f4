"""Mobility-graph community detection by directed-modularity maximization.

The detector runs a Leiden-style loop (local moving, refinement of each
community from singletons, aggregation, repeated until stable) on

    Q = sum_ij [ A_ij/m - resolution * k_i^out * k_j^in / m^2 ] * delta(c_i, c_j)

with m the total edge weight. Results are deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MobilityGraph
from .errors import EmptyGraphAfterThreshold, ZeroTotalWeight

OTHERS_ID = -1


@dataclass
class DetectionConfig:
    w_min: float = 0.0
    max_communities: int = 10
    resolution: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.w_min < 0:
            raise ValueError("w_min must be >= 0")
        if self.max_communities < 1:
            raise ValueError("max_communities must be >= 1")
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")


@dataclass
class Partition:
    """Community assignment with the `others` sentinel for the truncated tail."""

    communities: list[list[str]]          # ranked largest-first, members sorted
    others: list[str]
    assignment: dict[str, int]            # cbg id -> community index or OTHERS_ID
    modularity: float                     # Q of the untruncated detected partition
    others_id: int = OTHERS_ID

    def to_json_dict(self) -> dict:
        return {
            "v": 1,
            "communities": [{"id": i, "members": m} for i, m in enumerate(self.communities)],
            "others": self.others,
            "modularity": self.modularity,
        }


class _WorkGraph:
    """Directed weighted graph in adjacency-dict form for the Leiden loop."""

    def __init__(self, n, out_nbrs, in_nbrs, self_w, k_out, k_in, m):
        self.n = n
        self.out_nbrs = out_nbrs    # list of dict: j -> w(i, j), j != i
        self.in_nbrs = in_nbrs      # list of dict: j -> w(j, i), j != i
        self.self_w = self_w        # w(i, i)
        self.k_out = k_out          # out-strength incl. self-loops
        self.k_in = k_in
        self.m = m

    @classmethod
    def from_edges(cls, n, origins, dests, weights):
        out_nbrs = [dict() for _ in range(n)]
        in_nbrs = [dict() for _ in range(n)]
        self_w = np.zeros(n)
        k_out = np.zeros(n)
        k_in = np.zeros(n)
        for o, d, w in zip(origins, dests, weights):
            k_out[o] += w
            k_in[d] += w
            if o == d:
                self_w[o] += w
            else:
                out_nbrs[o][d] = out_nbrs[o].get(d, 0.0) + w
                in_nbrs[d][o] = in_nbrs[d].get(o, 0.0) + w
        m = float(weights.sum())
        return cls(n, out_nbrs, in_nbrs, self_w, k_out, k_in, m)


def _quality(g: _WorkGraph, comm: np.ndarray, gamma: float) -> float:
    ncomm = comm.max() + 1 if g.n else 0
    e_cc = np.zeros(ncomm)
    kout_c = np.zeros(ncomm)
    kin_c = np.zeros(ncomm)
    for i in range(g.n):
        c = comm[i]
        kout_c[c] += g.k_out[i]
        kin_c[c] += g.k_in[i]
        e_cc[c] += g.self_w[i]
        for j, w in g.out_nbrs[i].items():
            if comm[j] == c:
                e_cc[c] += w
    m = g.m
    return float((e_cc / m - gamma * kout_c * kin_c / (m * m)).sum())


def _local_move(g: _WorkGraph, comm: np.ndarray, gamma: float, rng) -> bool:
    """Queue-driven local moving; returns True if any node moved."""
    m = g.m
    ncomm = int(comm.max()) + 1
    kout_c = np.zeros(ncomm + g.n)
    kin_c = np.zeros(ncomm + g.n)
    for i in range(g.n):
        kout_c[comm[i]] += g.k_out[i]
        kin_c[comm[i]] += g.k_in[i]
    free = list(range(ncomm + g.n - 1, ncomm - 1, -1))  # ids for fresh singleton splits

    order = rng.permutation(g.n)
    queue = list(order)
    queued = np.ones(g.n, dtype=bool)
    head = 0
    moved_any = False
    while head < len(queue):
        i = queue[head]
        head += 1
        queued[i] = False
        a = comm[i]

        # detach i from its community
        kout_c[a] -= g.k_out[i]
        kin_c[a] -= g.k_in[i]

        # edge weight between i and each candidate community
        w_ic: dict[int, float] = {}
        for j, w in g.out_nbrs[i].items():
            w_ic[comm[j]] = w_ic.get(comm[j], 0.0) + w
        for j, w in g.in_nbrs[i].items():
            w_ic[comm[j]] = w_ic.get(comm[j], 0.0) + w

        best_c = a
        best_gain = w_ic.get(a, 0.0) / m - gamma * (
            g.k_out[i] * kin_c[a] + g.k_in[i] * kout_c[a]) / (m * m)
        if best_gain < 0.0:
            best_gain = 0.0         # becoming a singleton is always available
            best_c = -2
        for c in sorted(w_ic):
            if c == a:
                continue
            gain = w_ic[c] / m - gamma * (
                g.k_out[i] * kin_c[c] + g.k_in[i] * kout_c[c]) / (m * m)
            if gain > best_gain + 1e-12:
                best_gain = gain
                best_c = c
        if best_c == -2:
            best_c = free.pop()
        if best_c != a:
            moved_any = True
            comm[i] = best_c
            for j in list(g.out_nbrs[i]) + list(g.in_nbrs[i]):
                if comm[j] != best_c and not queued[j]:
                    queue.append(j)
                    queued[j] = True
        kout_c[comm[i]] += g.k_out[i]
        kin_c[comm[i]] += g.k_in[i]
    return moved_any


def _compact(comm: np.ndarray) -> np.ndarray:
    """Relabel community ids to 0..k-1 preserving first-appearance order."""
    seen = {}
    out = np.empty_like(comm)
    for idx, c in enumerate(comm):
        if c not in seen:
            seen[c] = len(seen)
        out[idx] = seen[c]
    return out


def _refine(g: _WorkGraph, comm: np.ndarray, gamma: float, rng) -> np.ndarray:
    """Split each community into well-merged sub-communities, starting from
    singletons and only merging within the parent community."""
    m = g.m
    refined = np.arange(g.n)
    kout_r = g.k_out.copy()
    kin_r = g.k_in.copy()
    size_r = np.ones(g.n, dtype=int)
    for i in rng.permutation(g.n):
        if size_r[refined[i]] > 1:
            continue  # only singletons may merge; keeps refinement well-formed
        a = refined[i]
        kout_r[a] -= g.k_out[i]
        kin_r[a] -= g.k_in[i]
        w_ic: dict[int, float] = {}
        for j, w in g.out_nbrs[i].items():
            if comm[j] == comm[i]:
                w_ic[refined[j]] = w_ic.get(refined[j], 0.0) + w
        for j, w in g.in_nbrs[i].items():
            if comm[j] == comm[i]:
                w_ic[refined[j]] = w_ic.get(refined[j], 0.0) + w
        best_c, best_gain = a, 0.0
        for c in sorted(w_ic):
            if c == a:
                continue
            gain = w_ic[c] / m - gamma * (
                g.k_out[i] * kin_r[c] + g.k_in[i] * kout_r[c]) / (m * m)
            if gain > best_gain + 1e-12:
                best_gain = gain
                best_c = c
        if best_c != a:
            size_r[a] -= 1
            size_r[best_c] += 1
            refined[i] = best_c
        kout_r[refined[i]] += g.k_out[i]
        kin_r[refined[i]] += g.k_in[i]
    return _compact(refined)


def _aggregate(g: _WorkGraph, refined: np.ndarray) -> _WorkGraph:
    n2 = int(refined.max()) + 1
    out_nbrs = [dict() for _ in range(n2)]
    in_nbrs = [dict() for _ in range(n2)]
    self_w = np.zeros(n2)
    k_out = np.zeros(n2)
    k_in = np.zeros(n2)
    for i in range(g.n):
        ci = refined[i]
        k_out[ci] += g.k_out[i]
        k_in[ci] += g.k_in[i]
        self_w[ci] += g.self_w[i]
        for j, w in g.out_nbrs[i].items():
            cj = refined[j]
            if ci == cj:
                self_w[ci] += w
            else:
                out_nbrs[ci][cj] = out_nbrs[ci].get(cj, 0.0) + w
                in_nbrs[cj][ci] = in_nbrs[cj].get(ci, 0.0) + w
    return _WorkGraph(n2, out_nbrs, in_nbrs, self_w, k_out, k_in, g.m)


def _leiden(g: _WorkGraph, gamma: float, rng, max_levels: int = 64) -> np.ndarray:
    """Full Leiden loop on the working graph; returns leaf-node communities.

    Each level runs local moving, refines every community from singletons,
    and aggregates over the refined partition (aggregate nodes start in their
    local-moving parent's community). The loop ends when nothing aggregates.
    """
    leaf_of = np.arange(g.n)  # original node -> current aggregate node
    comm = np.arange(g.n)
    for _ in range(max_levels):
        _local_move(g, comm, gamma, rng)
        comm = _compact(comm)
        refined = _refine(g, comm, gamma, rng)
        n_refined = int(refined.max()) + 1
        if n_refined == g.n:
            break  # no refined sub-communities to merge; partition is final
        # community of each refined (aggregate) node = parent from local moving
        agg_comm = np.zeros(n_refined, dtype=int)
        for i in range(g.n):
            agg_comm[refined[i]] = comm[i]
        g = _aggregate(g, refined)
        leaf_of = refined[leaf_of]
        comm = _compact(agg_comm)
    return comm[leaf_of]


def directed_modularity(graph: MobilityGraph, assignment: dict, resolution: float = 1.0) -> float:
    """Directed modularity of an assignment covering all nodes with any degree."""
    m = graph.total_weight
    if m <= 0:
        raise ZeroTotalWeight("graph has zero total edge weight")
    for node in graph.nodes:
        if node not in assignment:
            raise ValueError(f"assignment missing node {node!r}")
    labels = {}
    for node in graph.nodes:
        labels.setdefault(assignment[node], len(labels))
    comm = np.array([labels[assignment[n]] for n in graph.nodes])
    node_idx = {n: i for i, n in enumerate(graph.nodes)}
    origins = np.array([node_idx[o] for o in graph.origins], dtype=int)
    dests = np.array([node_idx[d] for d in graph.dests], dtype=int)
    g = _WorkGraph.from_edges(len(graph.nodes), origins, dests, graph.weights)
    return _quality(g, comm, resolution)


def detect_communities(graph: MobilityGraph, config: DetectionConfig,
                       all_nodes=None) -> Partition:
    """Detect flow-dense communities; edges below w_min are ignored.

    Nodes isolated by thresholding (and any extra ids in all_nodes) land in
    `others`, as does the remainder beyond max_communities.
    """
    if len(graph) == 0:
        raise EmptyGraphAfterThreshold("graph has no edges")
    filtered = graph.filtered(config.w_min)
    if len(filtered) == 0 or filtered.total_weight <= 0:
        raise EmptyGraphAfterThreshold(
            f"no edges with weight >= {config.w_min}")

    nodes = filtered.nodes
    node_idx = {n: i for i, n in enumerate(nodes)}
    origins = np.array([node_idx[o] for o in filtered.origins], dtype=int)
    dests = np.array([node_idx[d] for d in filtered.dests], dtype=int)
    g = _WorkGraph.from_edges(len(nodes), origins, dests, filtered.weights)

    # a few seeded restarts guard against local optima on small graphs
    comm, q = None, -np.inf
    for restart in range(3):
        rng = np.random.default_rng([config.seed, restart])
        cand = _leiden(g, config.resolution, rng)
        cand_q = _quality(g, _compact(cand), config.resolution)
        if cand_q > q + 1e-15:
            comm, q = cand, cand_q
    q_single = _quality(g, np.arange(g.n), config.resolution)
    q_all = _quality(g, np.zeros(g.n, dtype=int), config.resolution)
    if q_all >= q and q_all >= q_single:
        comm, q = np.zeros(g.n, dtype=int), q_all
    elif q_single > q:
        comm, q = np.arange(g.n), q_single

    groups: dict[int, list[str]] = {}
    for n, c in zip(nodes, comm):
        groups.setdefault(int(c), []).append(n)
    ranked = sorted(groups.values(), key=lambda ms: (-len(ms), min(ms)))
    for ms in ranked:
        ms.sort()

    kept = ranked[: config.max_communities]
    others = sorted(x for ms in ranked[config.max_communities:] for x in ms)
    covered = set(nodes)
    if all_nodes is not None:
        others = sorted(set(others) | (set(all_nodes) - covered))

    assignment = {}
    for idx, ms in enumerate(kept):
        for n in ms:
            assignment[n] = idx
    for n in others:
        assignment[n] = OTHERS_ID
    return Partition(communities=kept, others=others, assignment=assignment, modularity=q)
