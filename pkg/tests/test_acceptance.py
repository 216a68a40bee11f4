"""Acceptance suite: every release criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v`; a one-line PASS/FAIL verdict
per criterion is printed in the terminal summary.
"""

import json
import time

import numpy as np
import pytest

from mobiseg.community import DetectionConfig, detect_communities, directed_modularity
from mobiseg.data import MobilityGraph, group_proportions
from mobiseg.errors import NoInflow
from mobiseg.evalmetrics import cpc, jsd, pearson, rmse_nrmse
from mobiseg.explain import BackgroundSet, shapley_values
from mobiseg.models import POOLED, FlowPredictor, TrainConfig, chunk_loss_grad, train
from mobiseg.nnet import DeepGravityNet
from mobiseg.segregation import bridging_index, segregation_index, topsis_rank, visitor_mix
from mobiseg.synth import SynthConfig, generate_city, oracle_modularity_optimum
from .conftest import tiny_dataset

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------- criterion 1

def test_c1_index_correctness():
    """SI is exactly 0 on uniform and 1 on one-hot mixes for n in 2..8; the
    bridging index mirrors both cases. Tolerance 1e-12, runtime < 1 s."""
    t0 = time.perf_counter()
    for n in range(2, 9):
        uniform = np.full(n, 1.0 / n)
        one_hot = np.zeros(n)
        one_hot[n // 2] = 1.0
        assert abs(segregation_index(uniform, n) - 0.0) <= 1e-12
        assert abs(segregation_index(one_hot, n) - 1.0) <= 1e-12

        # neighbors all uniform -> BI = 1; all one-hot same group -> BI = 0
        k = 5
        lats = [0.004 * i for i in range(k + 1)]
        ds_u = tiny_dataset(np.full((k + 1, n), 10.0), [], lats=lats)
        theta_u = group_proportions(ds_u, "income")
        bi_u, _ = bridging_index(ds_u, theta_u, "c000", k_bridge=k)
        assert abs(bi_u - 1.0) <= 1e-12

        counts = np.zeros((k + 1, n))
        counts[:, 0] = 10.0
        ds_h = tiny_dataset(counts, [], lats=lats)
        theta_h = group_proportions(ds_h, "income")
        bi_h, _ = bridging_index(ds_h, theta_h, "c000", k_bridge=k)
        assert abs(bi_h - 0.0) <= 1e-12
    assert time.perf_counter() - t0 < 1.0


# ---------------------------------------------------------------- criterion 2

def _brute_visitor_mix(ds, theta, target):
    num = np.zeros(theta.values.shape[1])
    den = 0.0
    for o, d, w in ds.flows.edges():
        oi = ds.index[o]
        if d != target or w <= 0 or not theta.defined[oi]:
            continue
        num += theta.values[oi] * w
        den += w
    return num / den


def _brute_bridging(ds, theta, target, k):
    from mobiseg.data import centroid_distance

    t = ds.record(target)
    cands = sorted(
        ((centroid_distance(c, t), i) for i, c in enumerate(ds.cbgs)
         if c.id != target and theta.defined[i] and c.population > 0),
        key=lambda x: x[0])
    chosen = [i for _, i in cands[:k]]
    pops = np.array([ds.cbgs[i].population for i in chosen])
    mix = sum(theta.values[i] * p for i, p in zip(chosen, pops)) / pops.sum()
    n = len(mix)
    return 1.0 - n / (2 * n - 2) * np.abs(mix - 1.0 / n).sum()


def _brute_topsis(matrix):
    matrix = np.asarray(matrix, dtype=float)
    v = np.zeros_like(matrix)
    for j in range(matrix.shape[1]):
        norm = np.sqrt((matrix[:, j] ** 2).sum())
        v[:, j] = (matrix[:, j] / norm if norm > 0 else 0.0) * 0.5
    dp = np.zeros(len(matrix))
    dm = np.zeros(len(matrix))
    for j in range(v.shape[1]):
        if v[:, j].max() == v[:, j].min():
            continue
        dp += (v[:, j] - v[:, j].max()) ** 2
        dm += (v[:, j] - v[:, j].min()) ** 2
    dp, dm = np.sqrt(dp), np.sqrt(dm)
    with np.errstate(invalid="ignore"):
        out = np.where(dp + dm > 0, dm / (dp + dm), 0.5)
    return out


def test_c2_oracle_equivalence():
    """On 200 random small instances, every index, ranking and metric matches
    an independent brute-force re-evaluation within 1e-9. Runtime < 10 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(6, 12))
        g = int(rng.integers(2, 5))
        counts = rng.integers(0, 60, size=(n, g)).astype(float)
        edges = [(o, d, float(rng.uniform(0.2, 8)))
                 for o in range(n) for d in range(n)
                 if o != d and rng.uniform() < 0.5]
        if not edges:
            edges = [(0, 1, 1.0)]
        lats = rng.uniform(-0.1, 0.1, size=n)
        lons = rng.uniform(-0.1, 0.1, size=n)
        ds = tiny_dataset(counts, edges, lats=lats, lons=lons,
                          populations=rng.integers(400, 3000, size=n))
        theta = group_proportions(ds, "income")
        target = f"c{int(rng.integers(0, n)):03d}"

        try:
            mix = visitor_mix(ds, theta, target)
            assert np.max(np.abs(mix.pi - _brute_visitor_mix(ds, theta, target))) <= 1e-9
        except NoInflow:
            pass

        k = int(rng.integers(2, 5))
        eligible = int((theta.defined & (ds.population > 0)).sum())
        if eligible - 1 >= k:
            bi, _ = bridging_index(ds, theta, target, k_bridge=k)
            assert abs(bi - _brute_bridging(ds, theta, target, k)) <= 1e-9

        scores = [(float(a), float(b)) for a, b in rng.uniform(0, 1, size=(int(rng.integers(2, 8)), 2))]
        expected = _brute_topsis(scores)
        for idx, closeness in topsis_rank(scores):
            assert abs(closeness - expected[idx]) <= 1e-9

        m = int(rng.integers(3, 12))
        pred = rng.uniform(0, 10, size=m)
        actual = rng.uniform(0.1, 10, size=m)
        assert abs(cpc(pred, actual)
                   - 2 * np.minimum(pred, actual).sum() / (pred.sum() + actual.sum())) <= 1e-9
        p_, q_ = pred / pred.sum(), actual / actual.sum()
        mid = (p_ + q_) / 2
        kl = lambda a, b: float((a[a > 0] * np.log(a[a > 0] / b[a > 0])).sum())
        assert abs(jsd(pred, actual) - (0.5 * kl(p_, mid) + 0.5 * kl(q_, mid))) <= 1e-9
        r_num = ((pred - pred.mean()) * (actual - actual.mean())).sum()
        r_den = np.sqrt(((pred - pred.mean()) ** 2).sum() * ((actual - actual.mean()) ** 2).sum())
        assert abs(pearson(pred, actual) - r_num / r_den) <= 1e-9
        r, nr = rmse_nrmse(pred, actual)
        assert abs(r - np.sqrt(((pred - actual) ** 2).mean())) <= 1e-9
        assert abs(nr - r / (actual.max() - actual.min())) <= 1e-9
    assert time.perf_counter() - t0 < 10.0


# ---------------------------------------------------------------- criterion 3

def test_c3_community_detection():
    """50 planted two-block digraphs (weight ratio >= 10) recovered exactly;
    on 100 random graphs of <= 6 nodes the detected modularity reaches at
    least 0.95 x the exhaustive optimum and never falls below the trivial
    baselines. Runtime < 60 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    for trial in range(50):
        size_a = int(rng.integers(5, 10))
        size_b = int(rng.integers(5, 10))
        names_a = [f"a{i}" for i in range(size_a)]
        names_b = [f"b{i}" for i in range(size_b)]
        edges = []
        for block in (names_a, names_b):
            for x in block:
                for y in block:
                    if x != y and rng.uniform() < 0.7:
                        edges.append((x, y, float(rng.uniform(10, 20))))
        for _ in range(int(rng.integers(2, 6))):
            edges.append((str(rng.choice(names_a)), str(rng.choice(names_b)),
                          float(rng.uniform(0.5, 1.0))))
        part = detect_communities(MobilityGraph(edges), DetectionConfig(seed=trial))
        recovered = {frozenset(c) for c in part.communities}
        assert recovered == {frozenset(names_a), frozenset(names_b)}, f"trial {trial}"

    for trial in range(100):
        n = int(rng.integers(3, 7))
        names = [f"n{i}" for i in range(n)]
        edges = [(names[i], names[j], float(rng.integers(1, 9)))
                 for i in range(n) for j in range(n)
                 if i != j and rng.uniform() < 0.55]
        if not edges:
            edges = [(names[0], names[1], 1.0)]
        graph = MobilityGraph(edges)
        part = detect_communities(graph, DetectionConfig(seed=trial))
        best_q, _ = oracle_modularity_optimum(graph)
        assert part.modularity >= 0.95 * best_q - 1e-12, f"trial {trial}"
        singles = {node: i for i, node in enumerate(graph.nodes)}
        allin = {node: 0 for node in graph.nodes}
        assert part.modularity >= directed_modularity(graph, singles) - 1e-12
        assert part.modularity >= directed_modularity(graph, allin) - 1e-12
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------- criterion 4

def test_c4_model_mechanics():
    """Analytic gradients match central finite differences within 1e-3
    relative on a miniature network; softmax allocation conserves every
    origin's candidate total to 1e-9 relative; training is seed-deterministic
    (bit-identical checkpoints)."""
    rng = np.random.default_rng(4)
    net = DeepGravityNet(7, hidden=(10, 8, 6), seed=1, dtype=np.float64)
    b, k = 3, 6
    rows = rng.standard_normal((b * k, 7))
    fracs = rng.dirichlet(np.ones(k), size=b)
    weights = rng.uniform(0.5, 2.0, size=b)
    grad = np.zeros(net.n_params)
    chunk_loss_grad(net, rows, fracs, weights, grad)
    eps = 1e-4
    for i in rng.choice(net.n_params, size=80, replace=False):
        orig = net.theta[i]
        net.theta[i] = orig + eps
        up = chunk_loss_grad(net, rows, fracs, weights, np.zeros(net.n_params))
        net.theta[i] = orig - eps
        dn = chunk_loss_grad(net, rows, fracs, weights, np.zeros(net.n_params))
        net.theta[i] = orig
        fd = (up - dn) / (2 * eps)
        assert abs(grad[i] - fd) / max(abs(fd), abs(grad[i]), 1e-8) < 1e-3

    ds, _ = generate_city(SynthConfig(seed=7, n_cbgs=49, extent_km=10.0,
                                      mobility_rate=1.0))
    cfg = TrainConfig(attribute="income", variant="dg+s", k_dest=10, epochs=2,
                      seed=3, hidden=(32, 16))
    model = train(ds, cfg, run=0)
    predictor = FlowPredictor(ds, model)
    from mobiseg.models import evaluate_run

    preds, actuals, _ = evaluate_run(ds, model, predictor)
    assert preds, "no evaluated origins"
    for p, a in zip(preds, actuals):
        if a.sum() > 0:
            assert abs(p.sum() - a.sum()) <= 1e-9 * a.sum()

    again = train(ds, cfg, run=0)
    for label in model.models:
        assert model.models[label].theta.tobytes() == again.models[label].theta.tobytes()


# ---------------------------------------------------------------- criterion 5

def test_c5_variant_ordering():
    """Directional reproduction of the five-variant comparison on the crafted
    city (about 300 CBGs, homophily 0.7, group-POI affinity on): 5-run mean
    CPC orders DG+S+V >= DG+V >= G and DG+S+V >= DG+S >= DG >= G, with
    DG - G >= 0.03. 20 epochs x 5 runs, total runtime <= 10 minutes."""
    from mobiseg.models import evaluate_variants

    t0 = time.perf_counter()
    city = SynthConfig(seed=424, n_cbgs=300, extent_km=25.0, n_groups=2,
                       spatial_segregation=0.7, anchors_per_group=3,
                       homophily=0.7, poi_affinity_strength=1.0,
                       distance_decay=2.0, poi_placement_coupling=0.0,
                       mobility_rate=0.5)
    ds, _ = generate_city(city)
    base = TrainConfig(attribute="income", variant="dg", k_dest=30, epochs=20,
                       runs=5, seed=11, learning_rate=5e-4, origins_per_step=4)
    report, _models = evaluate_variants(
        ds, base, variants=["g", "dg", "dg+s", "dg+v", "dg+s+v"])
    elapsed = time.perf_counter() - t0

    mean_cpc = {m["variant"]: m["cpc"] for m in report.means}
    g, dg = mean_cpc["g"], mean_cpc["dg"]
    dgs, dgv, dgsv = mean_cpc["dg+s"], mean_cpc["dg+v"], mean_cpc["dg+s+v"]
    print(f"\n  5-run mean CPC: g={g:.4f} dg={dg:.4f} dg+s={dgs:.4f} "
          f"dg+v={dgv:.4f} dg+s+v={dgsv:.4f} ({elapsed:.0f}s)")
    assert dgsv >= dgv >= g
    assert dgsv >= dgs >= dg >= g
    assert dg - g >= 0.03
    assert elapsed <= 600.0


# ---------------------------------------------------------------- criterion 6

def test_c6_shapley_axioms():
    """Exact mode passes efficiency, dummy, and the linear closed form at
    1e-9; sampling mode stays within 0.05 x max|phi| of exact on 8-feature
    tiny networks across 20 random instances. Runtime < 60 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)

    # dummy + linear closed form
    c = np.array([2.0, 0.0, -1.0, 0.5, 0.0])
    f_lin = lambda rows: rows @ c
    b = rng.standard_normal(5)
    sv = shapley_values(f_lin, rng.standard_normal(5), BackgroundSet(b[None, :], 1, 0, 0.0))
    assert abs(sv.phi[1]) <= 1e-9 and abs(sv.phi[4]) <= 1e-9
    x = rng.standard_normal(5)
    sv = shapley_values(f_lin, x, BackgroundSet(b[None, :], 1, 0, 0.0))
    assert np.max(np.abs(sv.phi - c * (x - b))) <= 1e-9

    for trial in range(20):
        net = DeepGravityNet(8, hidden=(10, 6), seed=trial, dtype=np.float64)
        f = lambda rows: net.forward(rows).astype(float)
        x = rng.standard_normal(8)
        bg = BackgroundSet(rng.standard_normal((6, 8)), 6, 0, 0.0)
        exact = shapley_values(f, x, bg, mode="exact")
        assert abs(exact.phi.sum() - (exact.prediction - exact.base_value)) <= 1e-9
        sampled = shapley_values(f, x, bg, mode="sampling", samples=4096, seed=trial)
        tol = 0.05 * np.max(np.abs(exact.phi))
        assert np.max(np.abs(sampled.phi - exact.phi)) <= tol, f"instance {trial}"
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------- criterion 7

def test_c7_whatif_identity_conservation_latency():
    """Empty interventions are exact identities; per-origin candidate deltas
    sum to zero within 1e-9; a service round trip on a 1500-CBG city with a
    30-neighbor context answers within the 2-second budget."""
    from fastapi.testclient import TestClient
    from mobiseg.config import ServiceConfig
    from mobiseg.service import create_app
    from mobiseg.synth import write_city_csv
    from mobiseg.whatif import Intervention, apply_intervention, training_background
    import tempfile, os

    city = SynthConfig(seed=1500, n_cbgs=1500, extent_km=45.0, n_groups=2,
                       spatial_segregation=0.7, homophily=0.7,
                       distance_decay=3.0, mobility_rate=0.12)
    ds, _ = generate_city(city, max_prob_matrix=0)
    cfg = TrainConfig(attribute="income", variant="dg+s+v", k_dest=30, epochs=1,
                      runs=1, seed=0)
    model = train(ds, cfg, run=0)
    predictor = FlowPredictor(ds, model)
    background = training_background(ds, model, predictor, k=50)

    target = max(ds.cbg_ids, key=lambda c: ds.inflow_edges(c)[1].sum())
    res = apply_intervention(predictor, Intervention(target, {}),
                             k_bridge_context=30, background=background,
                             shap_samples=8, shap_max_origins=8)
    for g in res.groups:
        assert all(abs(d) <= 1e-9 for d in res.delta[g].values())
    assert res.delta_si == 0.0
    for origin, s in res.conservation.items():
        assert abs(s) <= 1e-9

    with tempfile.TemporaryDirectory() as tmp:
        svc_cfg = ServiceConfig(data_dir=os.path.join(tmp, "svc"), k_bridge=30,
                                whatif_shap_samples=8, whatif_shap_max_origins=8)
        app = create_app(svc_cfg)
        session = app.state.session
        dataset_id = "accept7"
        session.datasets[dataset_id] = ds
        session.active_id = dataset_id
        session.attribute = "income"
        session.models[("income", "dg+s+v")] = model
        session.current_model_key = ("income", "dg+s+v")
        client = TestClient(app)
        body = {"target": target, "deltas": {ds.poi_types[0]: 4.0}, "k_bridge": 30}
        client.post("/whatif", json=body)  # warm model/background caches
        t0 = time.perf_counter()
        r = client.post("/whatif", json=body)
        elapsed = time.perf_counter() - t0
        assert r.status_code == 200, r.text
        doc = r.json()
        assert doc["meta"]["n_context_origins"] >= 30
        print(f"\n  whatif round trip on 1500 CBGs: {elapsed*1000:.0f} ms")
        assert elapsed <= 2.0


# ---------------------------------------------------------------- criterion 8

def test_c8_protocol_harness(tmp_path):
    """`evaluate` runs the 50/50, 20-epoch, 5-run protocol over all five
    variants, emits per-run and mean metrics plus the decile CPC report, and
    is byte-identical across re-runs with the same seed."""
    from mobiseg.cli import run as cli_run

    city_dir = tmp_path / "city"
    assert cli_run(["synth", "--seed", "88", "--cbgs", "40", "--out", str(city_dir)]) == 0
    ds_path = tmp_path / "d.bin"
    assert cli_run(["ingest", "--flows", str(city_dir / "flows.csv"),
                    "--demo", str(city_dir / "demographics.csv"),
                    "--poi", str(city_dir / "poi.csv"), "--out", str(ds_path)]) == 0

    outputs = []
    for tag in ("one", "two"):
        m = tmp_path / f"metrics-{tag}.csv"
        d = tmp_path / f"deciles-{tag}.csv"
        code = cli_run(["evaluate", "--dataset", str(ds_path),
                        "--variants", "g,dg,dg+s,dg+v,dg+s+v",
                        "--epochs", "20", "--runs", "5", "--k-dest", "10",
                        "--seed", "17", "--out", str(m), "--deciles", str(d)])
        assert code == 0
        outputs.append((m.read_bytes(), d.read_bytes()))
    assert outputs[0] == outputs[1]

    lines = outputs[0][0].decode().strip().split("\n")
    assert lines[0] == "variant,run,cpc,jsd,pearson,rmse,nrmse"
    body = [ln.split(",") for ln in lines[1:]]
    for variant in ("g", "dg", "dg+s", "dg+v", "dg+s+v"):
        runs = [row for row in body if row[0] == variant and row[1] != "mean"]
        assert len(runs) == 5
        assert sum(1 for row in body if row[0] == variant and row[1] == "mean") == 1
    dec_lines = outputs[0][1].decode().strip().split("\n")
    assert dec_lines[0] == "variant,decile,cpc"
    assert len(dec_lines) == 1 + 5 * 10
