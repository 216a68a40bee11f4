"""Gravity and deep flow models: per-group segmentation, training, prediction.

Variants:

    g        log-linear gravity baseline (least squares on log flows)
    dg       one deep net on total flows
    dg+s     one deep net per social group, trained on its flow segment
    dg+v     like dg, plus destination visitor-mix features
    dg+s+v   segmentation and visitor-mix features combined

Training minimizes per-origin cross-entropy between observed flow fractions
over the origin's candidate set and the softmax of predicted scores, with each
origin weighted by its (segment) flow volume so a group's model is fitted
where that group actually lives. One optimizer step covers a small batch of
origins' candidate sets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .data import CityDataset, ProportionMatrix, group_proportions
from .errors import (
    DivergedLoss,
    InsufficientData,
    SelfPair,
    UnknownAttribute,
    WrongCandidateCount,
)
from .evalmetrics import MetricReport, decile_report, score_predictions
from .features import (
    VARIANTS,
    FeatureScaler,
    FeatureSchema,
    VisitorMixTable,
    build_schema,
    pair_features,
    variant_is_segmented,
)
from .nnet import DEFAULT_HIDDEN, Adam, DeepGravityNet, softmax_allocate

POOLED = "__all__"
MIN_DISTANCE_KM = 0.1


def _limit_blas():
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=1)
    except Exception:  # pragma: no cover - threadpoolctl is a declared dependency
        import contextlib
        return contextlib.nullcontext()


@dataclass
class TrainConfig:
    attribute: str
    variant: str = "dg+s+v"
    k_dest: int = 30
    epochs: int = 20
    runs: int = 5
    seed: int = 0
    learning_rate: float = 5e-4
    split_fraction: float = 0.5
    origins_per_step: int = 4
    hidden: tuple = DEFAULT_HIDDEN
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.k_dest < 2:
            raise ValueError("k_dest must be >= 2")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.split_fraction < 1):
            raise ValueError("split_fraction must be in (0, 1)")
        if self.origins_per_step < 1:
            raise ValueError("origins_per_step must be >= 1")


@dataclass
class GroupFlowSegments:
    """Edge list with per-group weights w_d = theta_origin_d * w."""

    attribute: str
    labels: tuple
    origin_idx: np.ndarray
    dest_idx: np.ndarray
    total_weight: np.ndarray
    group_weight: np.ndarray       # (E, n_groups)
    dropped_origins: list


def segment_flows_by_group(dataset: CityDataset, attribute: str,
                           theta: ProportionMatrix | None = None) -> GroupFlowSegments:
    """Split each edge's weight across the origin's resident groups. Origins
    with undefined proportions are dropped and reported."""
    if attribute not in dataset.attributes:
        raise UnknownAttribute(attribute, tuple(dataset.attributes))
    theta = theta or group_proportions(dataset, attribute)
    keep = theta.defined[dataset.edge_origin]
    o = dataset.edge_origin[keep]
    d = dataset.edge_dest[keep]
    w = dataset.edge_weight[keep]
    gw = theta.values[o] * w[:, None]
    dropped = sorted({dataset.cbg_ids[i] for i in dataset.edge_origin[~keep]})
    return GroupFlowSegments(
        attribute=attribute, labels=dataset.attributes[attribute].labels,
        origin_idx=o, dest_idx=d, total_weight=w, group_weight=gw,
        dropped_origins=dropped)


@dataclass
class GravityModel:
    """Log-linear gravity scores fed through the shared softmax allocation."""

    alpha: float
    beta: float
    gamma: float
    intercept: float = 0.0

    def scores_from_raw(self, raw_rows: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(raw_rows, dtype=float))
        p_i = np.maximum(rows[:, 0], 1.0)
        p_j = np.maximum(rows[:, 1], 1.0)
        d = np.maximum(rows[:, -1], MIN_DISTANCE_KM)
        return (self.alpha * np.log(p_i) + self.beta * np.log(p_j)
                - self.gamma * np.log(d))

    def to_json_dict(self):
        return {"alpha": self.alpha, "beta": self.beta,
                "gamma": self.gamma, "intercept": self.intercept}

    @classmethod
    def from_json_dict(cls, doc):
        return cls(doc["alpha"], doc["beta"], doc["gamma"], doc.get("intercept", 0.0))


def fit_gravity(raw_rows: np.ndarray, actual: np.ndarray,
                schema: FeatureSchema) -> GravityModel:
    """Least-squares fit of log w on [1, log p_i, log p_j, log dis] over pairs
    with positive observed flow."""
    mask = actual > 0
    if mask.sum() < 4:
        raise InsufficientData("need at least 4 positive flows to fit gravity")
    rows = raw_rows[mask]
    y = np.log(actual[mask])
    x = np.column_stack([
        np.ones(mask.sum()),
        np.log(np.maximum(rows[:, 0], 1.0)),
        np.log(np.maximum(rows[:, 1], 1.0)),
        np.log(np.maximum(rows[:, -1], MIN_DISTANCE_KM)),
    ])
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    return GravityModel(alpha=float(coef[1]), beta=float(coef[2]),
                        gamma=float(-coef[3]), intercept=float(coef[0]))


# --- split and candidate construction ---

def split_origins(dataset: CityDataset, seed: int, fraction: float):
    """Deterministic train/test split over CBGs that send any flow."""
    origins = np.unique(dataset.edge_origin[dataset.edge_weight > 0])
    if len(origins) < 2:
        raise InsufficientData("need at least two origin CBGs with outflow")
    rng = np.random.default_rng([seed, 7])
    perm = rng.permutation(origins)
    n_train = min(max(int(round(fraction * len(origins))), 1), len(origins) - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def candidate_universe(dataset: CityDataset, mix_table: VisitorMixTable) -> np.ndarray:
    """CBGs eligible as sampled destinations: observed inflow and a defined
    visitor mix (kept identical across variants so comparisons are fair)."""
    inflow = np.zeros(len(dataset.cbgs), dtype=bool)
    inflow[dataset.edge_dest[dataset.edge_weight > 0]] = True
    return np.flatnonzero(inflow & mix_table.defined)


def draw_candidates(dataset: CityDataset, origins: np.ndarray, k_dest: int,
                    universe: np.ndarray, rng) -> dict[int, np.ndarray]:
    """Per-origin candidate destinations: the origin's true destinations first,
    padded with uniform draws from the universe when fewer than k_dest exist,
    or sampled down from the true set when more exist."""
    universe_set = set(int(u) for u in universe)
    out = {}
    for o in origins:
        dests, weights = dataset.outflow_edges(dataset.cbg_ids[int(o)])
        true = np.unique(dests[(weights > 0) & (dests != o)])
        true = true[np.isin(true, universe)]
        if len(true) >= k_dest:
            chosen = rng.choice(true, size=k_dest, replace=False)
        else:
            pool = np.array(sorted(universe_set - set(map(int, true)) - {int(o)}), dtype=int)
            need = k_dest - len(true)
            if len(pool) < need:
                raise InsufficientData(
                    f"origin {dataset.cbg_ids[int(o)]!r}: cannot assemble {k_dest} candidates")
            pad = rng.choice(pool, size=need, replace=False)
            chosen = np.concatenate([true, pad])
        out[int(o)] = np.sort(chosen)
    return out


def _pair_actuals(dataset: CityDataset, origin: int, cands: np.ndarray) -> np.ndarray:
    dests, weights = dataset.outflow_edges(dataset.cbg_ids[origin])
    lookup = {int(d): float(w) for d, w in zip(dests, weights)}
    return np.array([lookup.get(int(c), 0.0) for c in cands])


# --- trained model bundle ---

class GroupModelSet:
    """Trained flow model(s) for one attribute/variant plus shared scaling."""

    def __init__(self, variant: str, attribute: str, schema: FeatureSchema,
                 scaler: FeatureScaler | None, models: dict, k_dest: int,
                 train_origin_ids: list, test_origin_ids: list,
                 candidates: dict, config: dict, epoch_losses: dict):
        self.variant = variant
        self.attribute = attribute
        self.schema = schema
        self.scaler = scaler
        self.models = models
        self.k_dest = k_dest
        self.train_origin_ids = list(train_origin_ids)
        self.test_origin_ids = list(test_origin_ids)
        self.candidates = {k: list(v) for k, v in candidates.items()}  # id -> dest ids
        self.config = dict(config)
        self.epoch_losses = {k: list(v) for k, v in epoch_losses.items()}

    @property
    def segmented(self) -> bool:
        return POOLED not in self.models

    @property
    def group_labels(self) -> list:
        return list(self.models)

    def score_raw(self, label: str, raw_rows: np.ndarray) -> np.ndarray:
        model = self.models[label]
        if isinstance(model, GravityModel):
            return model.scores_from_raw(raw_rows, self.schema)
        return model.forward(self.scaler.transform(raw_rows)).astype(float)

    # --- checkpointing (bit-exact) ---

    def to_json_dict(self) -> dict:
        models = {}
        for label, model in self.models.items():
            if isinstance(model, GravityModel):
                models[label] = {"kind": "gravity", **model.to_json_dict()}
            else:
                models[label] = {"kind": "deep", **model.state_dict()}
        return {
            "v": 1,
            "variant": self.variant,
            "attribute": self.attribute,
            "k_dest": self.k_dest,
            "schema": self.schema.to_json_dict(),
            "scaler": self.scaler.to_json_dict() if self.scaler else None,
            "models": models,
            "train_origin_ids": self.train_origin_ids,
            "test_origin_ids": self.test_origin_ids,
            "candidates": self.candidates,
            "config": self.config,
            "epoch_losses": self.epoch_losses,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GroupModelSet":
        models = {}
        for label, m in doc["models"].items():
            if m["kind"] == "gravity":
                models[label] = GravityModel.from_json_dict(m)
            else:
                models[label] = DeepGravityNet.from_state_dict(m)
        return cls(
            variant=doc["variant"], attribute=doc["attribute"],
            schema=FeatureSchema.from_json_dict(doc["schema"]),
            scaler=FeatureScaler.from_json_dict(doc["scaler"]) if doc["scaler"] else None,
            models=models, k_dest=doc["k_dest"],
            train_origin_ids=doc["train_origin_ids"],
            test_origin_ids=doc["test_origin_ids"],
            candidates=doc["candidates"],
            config=doc["config"], epoch_losses=doc["epoch_losses"])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, separators=(",", ":"), sort_keys=True)

    @classmethod
    def load(cls, path) -> "GroupModelSet":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


class FlowPredictor:
    """Binds a GroupModelSet to its dataset for inference."""

    def __init__(self, dataset: CityDataset, model_set: GroupModelSet,
                 mix_table: VisitorMixTable | None = None,
                 theta: ProportionMatrix | None = None):
        self.dataset = dataset
        self.model_set = model_set
        self.theta = theta or group_proportions(dataset, model_set.attribute)
        if model_set.schema.visitor_attrs and mix_table is None:
            mix_table = VisitorMixTable.compute(dataset)
        self.mix_table = mix_table

    def _features(self, origin_idx: np.ndarray, dest_idx: np.ndarray) -> np.ndarray:
        return pair_features(self.dataset, origin_idx, dest_idx,
                             self.model_set.schema, self.mix_table)

    def group_totals(self, origin: int, actual_total: float) -> dict:
        """Split an origin's candidate-set flow total across its groups."""
        ms = self.model_set
        if not ms.segmented:
            return {POOLED: actual_total}
        labels = self.dataset.attributes[ms.attribute].labels
        shares = self.theta.values[origin]
        return {label: float(shares[labels.index(label)] * actual_total)
                for label in ms.group_labels}

    def allocate(self, origin: int, dest_idx: np.ndarray, actual_total: float,
                 raw_rows: np.ndarray | None = None) -> dict:
        """Per-group flow allocation over an arbitrary candidate list."""
        if raw_rows is None:
            raw_rows = self._features(np.full(len(dest_idx), origin), dest_idx)
        totals = self.group_totals(origin, actual_total)
        out = {}
        for label, total in totals.items():
            scores = self.model_set.score_raw(label, raw_rows)
            out[label] = softmax_allocate(scores, total)
        return out

    def predict_flows(self, origin_id: str, destination_ids, actual_total: float,
                      group: str | None = None) -> np.ndarray:
        """Predicted flow for each candidate destination (softmax
        allocation of the origin's observed candidate-set total)."""
        ms = self.model_set
        if len(destination_ids) != ms.k_dest:
            raise WrongCandidateCount(ms.k_dest, len(destination_ids))
        if origin_id in destination_ids:
            raise SelfPair(f"origin {origin_id!r} appears among its destinations")
        o = self.dataset.index[origin_id]
        d = np.array([self.dataset.index[x] for x in destination_ids])
        alloc = self.allocate(o, d, actual_total)
        if group is not None:
            return alloc[group]
        return np.sum(list(alloc.values()), axis=0)


# --- training ---

def chunk_loss_grad(net: DeepGravityNet, rows: np.ndarray, fracs: np.ndarray,
                    weights: np.ndarray, grad_out: np.ndarray):
    """Weighted per-origin cross-entropy over a chunk of origins.

    rows: (B*k, f) standardized features; fracs: (B, k) observed flow fractions;
    weights: (B,) origin weights. Returns the weighted mean loss; the gradient
    of that loss accumulates into grad_out.
    """
    b, k = fracs.shape
    dt = net.dtype.type
    acts = net.forward_acts(rows)
    scores = acts[-1][:, 0].reshape(b, k).astype(float)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    logp = shifted - np.log(e.sum(axis=1, keepdims=True))
    loss = float(-(weights * (fracs * logp).sum(axis=1)).sum() / b)
    dscore = ((p - fracs) * (weights / b)[:, None]).reshape(b * k)
    net.backward(acts, dscore.astype(dt), grad_out)
    return loss


def _train_single_net(rows_by_origin, fracs_by_origin, weights, config: TrainConfig,
                      input_dim: int, init_seed: list) -> tuple[DeepGravityNet, list]:
    """Adam-train one scoring net; fully deterministic for a fixed seed."""
    net = DeepGravityNet(input_dim, hidden=config.hidden, seed=init_seed,
                         dtype=np.dtype(config.dtype))
    adam = Adam(net.n_params, lr=config.learning_rate, dtype=net.theta.dtype)
    rng = np.random.default_rng(list(init_seed) + [991])
    grad = np.zeros(net.n_params, dtype=net.theta.dtype)
    n_origins = len(rows_by_origin)
    w_norm = weights / weights.mean()
    losses = []
    with _limit_blas():
        for _epoch in range(config.epochs):
            order = rng.permutation(n_origins)
            epoch_loss = 0.0
            weight_sum = 0.0
            for start in range(0, n_origins, config.origins_per_step):
                sel = order[start:start + config.origins_per_step]
                rows = np.concatenate([rows_by_origin[i] for i in sel])
                fracs = np.stack([fracs_by_origin[i] for i in sel])
                wts = w_norm[sel]
                grad[:] = 0
                loss = chunk_loss_grad(net, rows, fracs, wts, grad)
                if not np.isfinite(loss):
                    raise DivergedLoss(f"loss became non-finite at epoch {_epoch}")
                adam.step(net.theta, grad)
                epoch_loss += loss * len(sel)
                weight_sum += len(sel)
            losses.append(epoch_loss / weight_sum)
    return net, losses


def train(dataset: CityDataset, config: TrainConfig, run: int = 0) -> GroupModelSet:
    """Train one run of the configured variant; seed-deterministic."""
    theta = group_proportions(dataset, config.attribute)
    schema = build_schema(dataset, config.variant)
    mix_table = VisitorMixTable.compute(dataset)
    universe = candidate_universe(dataset, mix_table)
    if len(universe) <= config.k_dest:
        raise InsufficientData(
            f"need more than k_dest={config.k_dest} candidate destinations, "
            f"have {len(universe)}")

    train_idx, test_idx = split_origins(dataset, config.seed, config.split_fraction)
    rng_cand = np.random.default_rng([config.seed, 101, run])
    cands = draw_candidates(dataset, np.concatenate([train_idx, test_idx]),
                            config.k_dest, universe, rng_cand)

    mix_for_features = mix_table if schema.visitor_attrs else None
    train_rows_raw = []
    train_actuals = []
    usable_train = []
    for o in train_idx:
        if not theta.defined[o]:
            continue
        c = cands[int(o)]
        raw = pair_features(dataset, np.full(len(c), o), c, schema, mix_for_features)
        train_rows_raw.append(raw)
        train_actuals.append(_pair_actuals(dataset, int(o), c))
        usable_train.append(int(o))
    if not usable_train:
        raise InsufficientData("no trainable origins with defined proportions")

    losses: dict = {}
    if config.variant == "g":
        all_rows = np.concatenate(train_rows_raw)
        all_actual = np.concatenate(train_actuals)
        models = {POOLED: fit_gravity(all_rows, all_actual, schema)}
        scaler = FeatureScaler.fit(all_rows, schema)
    else:
        all_rows = np.concatenate(train_rows_raw)
        scaler = FeatureScaler.fit(all_rows, schema)
        dt = np.dtype(config.dtype)
        rows_std = [scaler.transform(r).astype(dt) for r in train_rows_raw]

        if variant_is_segmented(config.variant):
            labels = list(dataset.attributes[config.attribute].labels)
        else:
            labels = [POOLED]
        models = {}
        for li, label in enumerate(labels):
            rows_g, fracs_g, w_g = [], [], []
            for ti, o in enumerate(usable_train):
                total = train_actuals[ti].sum()
                share = theta.values[o][li] if label != POOLED else 1.0
                seg_total = share * total
                if seg_total <= 0:
                    continue
                rows_g.append(rows_std[ti])
                fracs_g.append((train_actuals[ti] / total).astype(dt))
                w_g.append(seg_total)
            if not rows_g:
                raise InsufficientData(f"group {label!r} has no flow to train on")
            net, net_losses = _train_single_net(
                rows_g, fracs_g, np.array(w_g), config, schema.n,
                init_seed=[config.seed, 202, run, li])
            models[label] = net
            losses[label] = net_losses

    return GroupModelSet(
        variant=config.variant, attribute=config.attribute, schema=schema,
        scaler=scaler, models=models, k_dest=config.k_dest,
        train_origin_ids=[dataset.cbg_ids[i] for i in usable_train],
        test_origin_ids=[dataset.cbg_ids[i] for i in test_idx],
        candidates={dataset.cbg_ids[o]: [dataset.cbg_ids[int(c)] for c in cs]
                    for o, cs in cands.items()},
        config={**asdict(config), "hidden": list(config.hidden), "run": run},
        epoch_losses=losses)


# --- evaluation protocol ---

def evaluate_run(dataset: CityDataset, model_set: GroupModelSet,
                 predictor: FlowPredictor | None = None):
    """Predict every test origin's candidate pairs; returns metric inputs."""
    theta = group_proportions(dataset, model_set.attribute)
    predictor = predictor or FlowPredictor(dataset, model_set, theta=theta)
    test_idx = np.array([dataset.index[i] for i in model_set.test_origin_ids])

    preds, actuals, pops = [], [], []
    for o in np.sort(test_idx):
        if not theta.defined[o]:
            continue
        cid = dataset.cbg_ids[int(o)]
        c = np.array([dataset.index[x] for x in model_set.candidates[cid]])
        actual = _pair_actuals(dataset, int(o), c)
        total = float(actual.sum())
        alloc = predictor.allocate(int(o), c, total)
        pred = np.sum(list(alloc.values()), axis=0)
        preds.append(pred)
        actuals.append(actual)
        pops.append(dataset.population[o])
    return preds, actuals, np.array(pops)


def evaluate_variants(dataset: CityDataset, base_config: TrainConfig,
                      variants=None) -> tuple[MetricReport, dict]:
    """Train runs x variants under the 50/50 protocol and report all metrics
    plus the per-variant decile CPC breakdown (averaged over runs)."""
    variants = list(variants or VARIANTS)
    report = MetricReport()
    trained = {}
    for variant in variants:
        per_run = []
        decile_stack = []
        for run in range(base_config.runs):
            cfg = TrainConfig(**{**asdict(base_config), "variant": variant})
            model_set = train(dataset, cfg, run=run)
            trained[(variant, run)] = model_set
            preds, actuals, pops = evaluate_run(dataset, model_set)
            flat_pred = np.concatenate(preds)
            flat_actual = np.concatenate(actuals)
            per_run.append(score_predictions(flat_pred, flat_actual))
            if len(pops) >= 10:
                decile_stack.append(decile_report(pops, preds, actuals))
        report.add_runs(variant, per_run)
        if decile_stack:
            report.add_deciles(variant, list(np.mean(decile_stack, axis=0)))
    return report, trained
