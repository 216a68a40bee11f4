import numpy as np
import pytest

from mobiseg.community import (
    OTHERS_ID,
    DetectionConfig,
    Partition,
    detect_communities,
    directed_modularity,
)
from mobiseg.data import MobilityGraph
from mobiseg.errors import EmptyGraphAfterThreshold, ZeroTotalWeight
from mobiseg.synth import oracle_modularity_optimum


def directed_triangle(names, w=1.0):
    a, b, c = names
    return [(a, b, w), (b, c, w), (c, a, w)]


def directed_clique(names, w=1.0):
    return [(a, b, w) for a in names for b in names if a != b]


def two_triangles():
    return MobilityGraph(directed_triangle("abc") + directed_triangle("xyz"))


def random_graph(rng, n, p=0.5):
    edges = []
    names = [f"n{i}" for i in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and rng.uniform() < p:
                edges.append((names[i], names[j], float(rng.integers(1, 10))))
    if not edges:
        edges.append((names[0], names[1], 1.0))
    return MobilityGraph(edges)


def test_modularity_single_edge_singletons_is_zero():
    g = MobilityGraph([("a", "b", 1.0)])
    q = directed_modularity(g, {"a": 0, "b": 1})
    assert q == pytest.approx(0.0, abs=1e-15)


def test_modularity_two_triangles_planted_half():
    g = two_triangles()
    assignment = {"a": 0, "b": 0, "c": 0, "x": 1, "y": 1, "z": 1}
    assert directed_modularity(g, assignment) == pytest.approx(0.5, abs=1e-12)


def test_modularity_planted_beats_all_in_one():
    g = two_triangles()
    planted = {"a": 0, "b": 0, "c": 0, "x": 1, "y": 1, "z": 1}
    allin = {k: 0 for k in "abcxyz"}
    assert directed_modularity(g, planted) >= directed_modularity(g, allin)


def test_modularity_zero_weight_graph_raises():
    g = MobilityGraph([("a", "b", 0.0)])
    with pytest.raises(ZeroTotalWeight):
        directed_modularity(g, {"a": 0, "b": 0})


def test_modularity_requires_full_assignment():
    g = MobilityGraph([("a", "b", 1.0)])
    with pytest.raises(ValueError):
        directed_modularity(g, {"a": 0})


def test_detect_two_cliques():
    g = MobilityGraph(directed_clique("abc") + directed_clique("xyz"))
    part = detect_communities(g, DetectionConfig(seed=1))
    assert len(part.communities) == 2
    assert sorted(map(tuple, part.communities)) == [("a", "b", "c"), ("x", "y", "z")]
    assert part.others == []


def test_detect_threshold_above_all_weights():
    g = MobilityGraph(directed_clique("abc", w=2.0))
    with pytest.raises(EmptyGraphAfterThreshold):
        detect_communities(g, DetectionConfig(w_min=5.0))


def test_detect_matches_exhaustive_on_six_nodes():
    g = MobilityGraph(directed_triangle("abc") + directed_triangle("xyz") + [("a", "x", 0.5)])
    part = detect_communities(g, DetectionConfig(seed=3))
    best_q, _ = oracle_modularity_optimum(g)
    assert part.modularity == pytest.approx(best_q, abs=1e-12)


def test_detect_seed_reproducible():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 30, p=0.2)
    p1 = detect_communities(g, DetectionConfig(seed=42))
    p2 = detect_communities(g, DetectionConfig(seed=42))
    assert p1.assignment == p2.assignment
    assert p1.modularity == p2.modularity


def test_detect_never_below_trivial_baselines():
    rng = np.random.default_rng(5)
    for trial in range(20):
        g = random_graph(rng, int(rng.integers(3, 7)))
        part = detect_communities(g, DetectionConfig(seed=trial))
        singles = {n: i for i, n in enumerate(g.nodes)}
        allin = {n: 0 for n in g.nodes}
        assert part.modularity >= directed_modularity(g, singles) - 1e-12
        assert part.modularity >= directed_modularity(g, allin) - 1e-12


def test_detect_recovers_planted_blocks():
    rng = np.random.default_rng(9)
    names_a = [f"a{i}" for i in range(8)]
    names_b = [f"b{i}" for i in range(8)]
    edges = []
    for block in (names_a, names_b):
        for x in block:
            for y in block:
                if x != y and rng.uniform() < 0.8:
                    edges.append((x, y, 10.0))
    for _ in range(10):
        edges.append((str(rng.choice(names_a)), str(rng.choice(names_b)), 1.0))
    part = detect_communities(MobilityGraph(edges), DetectionConfig(seed=0))
    assert len(part.communities) == 2
    recovered = {frozenset(c) for c in part.communities}
    assert recovered == {frozenset(names_a), frozenset(names_b)}


def test_raising_threshold_never_adds_edges():
    rng = np.random.default_rng(2)
    g = random_graph(rng, 12, p=0.4)
    sizes = [len(g.filtered(w)) for w in (0.0, 2.0, 5.0, 8.0)]
    assert sizes == sorted(sizes, reverse=True)


def test_truncation_to_others():
    # five 3-cycles, keep top 2 communities
    edges = []
    for k in range(5):
        edges += directed_triangle([f"c{k}{i}" for i in range(3)], w=1.0 + k)
    part = detect_communities(MobilityGraph(edges), DetectionConfig(seed=0, max_communities=2))
    assert len(part.communities) == 2
    assert len(part.others) == 9
    assert all(part.assignment[m] == OTHERS_ID for m in part.others)


def test_all_nodes_padding_goes_to_others():
    g = MobilityGraph(directed_triangle("abc"))
    part = detect_communities(g, DetectionConfig(seed=0), all_nodes=["a", "b", "c", "isolated"])
    assert "isolated" in part.others


def test_partition_json_contract():
    g = two_triangles()
    part = detect_communities(g, DetectionConfig(seed=0))
    doc = part.to_json_dict()
    assert doc["v"] == 1
    assert {c["id"] for c in doc["communities"]} == {0, 1}
    assert all(c["members"] == sorted(c["members"]) for c in doc["communities"])


def test_community_ranking_by_size_then_lexicographic():
    edges = directed_clique(["m", "n", "o", "p"]) + directed_triangle(["a", "b", "c"]) \
        + directed_triangle(["x", "y", "z"])
    part = detect_communities(MobilityGraph(edges), DetectionConfig(seed=0))
    assert part.communities[0] == ["m", "n", "o", "p"]
    assert part.communities[1] == ["a", "b", "c"]  # tie vs xyz broken by smallest member
    assert part.communities[2] == ["x", "y", "z"]
