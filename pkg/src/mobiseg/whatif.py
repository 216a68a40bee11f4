"""What-if engine: apply POI edits to a target CBG, re-predict per-group flows,
recompute its segregation index, and persist named strategies.

The evaluation context for a target is its k nearest CBGs (the Dorling-map
neighborhood) plus every origin with observed flow into it. Each context
origin's candidate set is its true destinations plus the target, so predicted
totals are conserved per origin and the per-candidate deltas sum to zero.
"""

from __future__ import annotations

import json
import os
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from .data import CityDataset
from .errors import (
    MobisegError,
    NegativeDensity,
    StorageFailure,
    UnknownCbg,
    UnknownPoiType,
    UnknownStrategy,
    UntrainedModel,
)
from .explain import BackgroundSet, aggregate_shap, kmeans_background, shapley_values
from .features import pair_features
from .models import POOLED, FlowPredictor, GroupModelSet
from .nnet import softmax_allocate
from .segregation import nearest_neighbors, segregation_index


@dataclass(frozen=True)
class Intervention:
    """POI density edits for one target CBG; values are new absolute densities.

    Only POI slots are editable by default. With expert=True, destination-side
    feature slots (e.g. dest_population) may be overridden by slot name.
    """

    target: str
    deltas: dict
    feature_overrides: dict = field(default_factory=dict)
    expert: bool = False

    def validate(self, dataset: CityDataset, schema=None):
        if self.target not in dataset.index:
            raise UnknownCbg(self.target, "intervention")
        for poi_type, value in self.deltas.items():
            if poi_type not in dataset.poi_types:
                raise UnknownPoiType(poi_type, dataset.poi_types)
            if value < 0:
                raise NegativeDensity(f"{poi_type}={value}")
        if self.feature_overrides:
            if not self.expert:
                raise MobisegError(
                    "feature_overrides require expert=True; only POI slots are "
                    "editable by default")
            if schema is not None:
                for slot in self.feature_overrides:
                    if slot not in schema.slots or slot.startswith("origin"):
                        raise UnknownPoiType(slot, tuple(schema.slots))


@dataclass
class ScenarioResult:
    """Per-group flow deltas at the target, the new mix/index, and a refreshed
    attribution report for the modified destination."""

    target: str
    attribute: str
    origins: list
    groups: list
    flow_before: dict      # group -> {origin: predicted before}
    flow_after: dict       # group -> {origin: predicted after}
    delta: dict            # group -> {origin: after - before}
    new_flows: dict        # group -> {origin: actual + delta, floored at 0}
    mix_before: list
    mix_after: list
    si_before: float
    si_after: float
    delta_si: float
    delta_si_pct: float
    conservation: dict     # origin -> sum of per-candidate deltas (should be ~0)
    shap_report: dict | None
    meta: dict = field(default_factory=dict)

    def to_json_dict(self):
        return {
            "v": 1,
            "target": self.target,
            "attribute": self.attribute,
            "origins": self.origins,
            "groups": self.groups,
            "flow_before": self.flow_before,
            "flow_after": self.flow_after,
            "delta": self.delta,
            "new_flows": self.new_flows,
            "mix_before": self.mix_before,
            "mix_after": self.mix_after,
            "si_before": self.si_before,
            "si_after": self.si_after,
            "delta_si": self.delta_si,
            "delta_si_pct": self.delta_si_pct,
            "shap": self.shap_report,
            "meta": self.meta,
        }

    def summary(self):
        return {
            "target": self.target,
            "si_before": self.si_before,
            "si_after": self.si_after,
            "delta_si": self.delta_si,
            "delta_si_pct": self.delta_si_pct,
            "mix_before": self.mix_before,
            "mix_after": self.mix_after,
        }


def whatif_context(dataset: CityDataset, target: str, k_bridge: int) -> list[int]:
    """Origin indices evaluated for a what-if: the k nearest CBGs plus every
    CBG with observed flow into the target (target excluded)."""
    eligible = np.ones(len(dataset.cbgs), dtype=bool)
    k = min(k_bridge, len(dataset.cbgs) - 1)
    nearest = nearest_neighbors(dataset, target, k, eligible)
    inflow_idx, weights = dataset.inflow_edges(target)
    t = dataset.index[target]
    context = set(int(i) for i in nearest) | {int(i) for i, w in zip(inflow_idx, weights)
                                              if w > 0 and int(i) != t}
    context.discard(t)
    return sorted(context)


def training_background(dataset: CityDataset, model_set: GroupModelSet,
                        predictor: FlowPredictor, k: int = 50, seed: int = 0) -> BackgroundSet:
    """K-means summary of the model's (standardized) training feature rows."""
    rows = []
    for origin in model_set.train_origin_ids:
        o = dataset.index[origin]
        cands = np.array([dataset.index[c] for c in model_set.candidates[origin]])
        rows.append(pair_features(dataset, np.full(len(cands), o), cands,
                                  model_set.schema, predictor.mix_table))
    raw = np.concatenate(rows)
    return kmeans_background(model_set.scaler.transform(raw), k=k, seed=seed)


def apply_intervention(predictor: FlowPredictor, intervention: Intervention,
                       k_bridge_context: int = 30, background: BackgroundSet | None = None,
                       shap_samples: int = 16, shap_max_origins: int = 16,
                       shap_seed: int = 0, compute_shap: bool = True) -> ScenarioResult:
    """Predict per-group flow changes from a POI intervention and recompute the
    target's visitor mix and segregation index from the adjusted flows."""
    t_start = time.perf_counter()
    if predictor is None or predictor.model_set is None:
        raise UntrainedModel("no trained model bound to this dataset")
    dataset = predictor.dataset
    ms = predictor.model_set
    intervention.validate(dataset, schema=ms.schema)
    target = intervention.target
    t_idx = dataset.index[target]
    schema = ms.schema
    theta = predictor.theta
    labels = ms.group_labels
    attr_labels = dataset.attributes[ms.attribute].labels

    context = whatif_context(dataset, target, k_bridge_context)
    origin_ids = [dataset.cbg_ids[i] for i in context]

    # candidate sets: true destinations plus the target
    cand_idx = []
    cand_origin = []
    target_row_of = {}
    bounds = []
    pos = 0
    for i in context:
        dests, weights = dataset.outflow_edges(dataset.cbg_ids[i])
        cands = sorted({int(d) for d, w in zip(dests, weights) if w > 0 and int(d) != i}
                       | {t_idx})
        target_row_of[i] = pos + cands.index(t_idx)
        cand_idx.extend(cands)
        cand_origin.extend([i] * len(cands))
        bounds.append((pos, pos + len(cands)))
        pos += len(cands)
    cand_idx = np.array(cand_idx, dtype=int)
    cand_origin = np.array(cand_origin, dtype=int)

    raw = pair_features(dataset, cand_origin, cand_idx, schema, predictor.mix_table)
    new_density = dict(zip(dataset.poi_types, dataset.poi[t_idx]))
    new_density.update(intervention.deltas)
    target_rows = np.array([target_row_of[i] for i in context])
    raw_after = raw[target_rows].copy()
    for poi_type, value in new_density.items():
        raw_after[:, schema.dest_poi_slot(poi_type)] = value
    slot_names = schema.slots
    for slot, value in intervention.feature_overrides.items():
        raw_after[:, slot_names.index(slot)] = value

    # actual per-pair flows and per-group candidate totals
    actual = np.zeros(len(cand_idx))
    actual_to_target = np.zeros(len(context))
    for ci, i in enumerate(context):
        lo, hi = bounds[ci]
        dests, weights = dataset.outflow_edges(dataset.cbg_ids[i])
        lookup = {int(d): float(w) for d, w in zip(dests, weights)}
        actual[lo:hi] = [lookup.get(int(c), 0.0) for c in cand_idx[lo:hi]]
        actual_to_target[ci] = lookup.get(t_idx, 0.0)

    flow_before = {g: {} for g in labels}
    flow_after = {g: {} for g in labels}
    delta = {g: {} for g in labels}
    actual_seg = {g: {} for g in labels}   # observed flow to target, per model group
    conservation = {}

    scores_before = {g: ms.score_raw(g, raw) for g in labels}
    # rescore only rows whose features actually changed; identical rows keep
    # their before-scores bit-for-bit (an empty edit stays an exact identity)
    changed = ~np.all(raw_after == raw[target_rows], axis=1)
    scores_after_t = {}
    for g in labels:
        after = scores_before[g][target_rows].copy()
        if changed.any():
            after[changed] = ms.score_raw(g, raw_after[changed])
        scores_after_t[g] = after

    group_inflow_before = np.zeros(len(attr_labels))
    group_inflow_after = np.zeros(len(attr_labels))

    for ci, i in enumerate(context):
        lo, hi = bounds[ci]
        total = float(actual[lo:hi].sum())
        theta_row = theta.values[i] if theta.defined[i] else None
        cons = 0.0
        for g in labels:
            if g == POOLED:
                g_total = total
                g_actual = float(actual_to_target[ci])
            else:
                if theta_row is None:
                    continue
                share = theta_row[attr_labels.index(g)]
                g_total = float(share * total)
                g_actual = float(share * actual_to_target[ci])
            s_before = scores_before[g][lo:hi]
            w_before = softmax_allocate(s_before, g_total)
            s_after = s_before.copy()
            s_after[target_row_of[i] - lo] = scores_after_t[g][ci]
            w_after = softmax_allocate(s_after, g_total)
            d_vec = w_after - w_before
            cons += float(d_vec.sum())
            oid = dataset.cbg_ids[i]
            tpos = target_row_of[i] - lo
            flow_before[g][oid] = float(w_before[tpos])
            flow_after[g][oid] = float(w_after[tpos])
            delta[g][oid] = float(d_vec[tpos])
            actual_seg[g][oid] = g_actual
        conservation[dataset.cbg_ids[i]] = cons

        # adjusted inflow at the target, per demographic group
        if theta_row is not None:
            for k, lbl in enumerate(attr_labels):
                base = theta_row[k] * actual_to_target[ci]
                if ms.segmented:
                    d_t = delta.get(lbl, {}).get(dataset.cbg_ids[i], 0.0)
                else:
                    d_t = theta_row[k] * delta[POOLED][dataset.cbg_ids[i]]
                group_inflow_before[k] += base
                group_inflow_after[k] += max(0.0, base + d_t)

    # include inflow from origins outside the context (unchanged by the edit)
    inflow_idx, inflow_w = dataset.inflow_edges(target)
    ctx_set = set(context)
    for i, w in zip(inflow_idx, inflow_w):
        i = int(i)
        if i in ctx_set or i == t_idx or w <= 0 or not theta.defined[i]:
            continue
        group_inflow_before += theta.values[i] * w
        group_inflow_after += theta.values[i] * w

    def mix_and_si(group_inflow):
        total = group_inflow.sum()
        if total <= 0:
            return [0.0] * len(attr_labels), 0.0
        mix = group_inflow / total
        return [float(x) for x in mix], segregation_index(mix)

    mix_before, si_before = mix_and_si(group_inflow_before)
    mix_after, si_after = mix_and_si(group_inflow_after)
    delta_si = si_after - si_before
    delta_si_pct = (delta_si / si_before * 100.0) if si_before > 0 else 0.0

    shap_doc = None
    if compute_shap:
        if background is None:
            background = training_background(dataset, ms, predictor)
        per_group = {}
        ranked = np.argsort(-actual_to_target, kind="stable")[:shap_max_origins]
        for g in labels:
            model = ms.models[g]
            if not hasattr(model, "forward"):
                continue  # gravity baseline has no learned feature response
            f = lambda rows_, m=model: m.forward(rows_).astype(float)
            by_origin = {}
            for ci in ranked:
                row_std = ms.scaler.transform(raw_after[int(ci)][None, :])[0]
                by_origin[origin_ids[int(ci)]] = shapley_values(
                    f, row_std, background, samples=shap_samples, seed=shap_seed)
            if by_origin:
                per_group[g] = by_origin
        if per_group:
            shap_doc = aggregate_shap(per_group, schema.slots).to_json_dict()
            shap_doc["meta"] = {"samples": shap_samples,
                                "origin_sample": int(len(ranked))}

    result = ScenarioResult(
        target=target, attribute=ms.attribute, origins=origin_ids,
        groups=list(labels),
        flow_before=flow_before, flow_after=flow_after, delta=delta,
        new_flows={g: {o: max(0.0, actual_seg[g][o] + delta[g][o])
                       for o in delta[g]} for g in labels},
        mix_before=mix_before, mix_after=mix_after,
        si_before=float(si_before), si_after=float(si_after),
        delta_si=float(delta_si), delta_si_pct=float(delta_si_pct),
        conservation=conservation, shap_report=shap_doc,
        meta={"elapsed_s": time.perf_counter() - t_start,
              "k_bridge_context": k_bridge_context,
              "n_context_origins": len(context)},
    )
    return result


# --- strategy persistence ---

@dataclass
class Strategy:
    id: str
    label: str
    target: str
    deltas: dict
    result_summary: dict
    created: float
    updated: float

    def to_json_dict(self):
        return {"id": self.id, "label": self.label, "target": self.target,
                "deltas": self.deltas, "result_summary": self.result_summary,
                "created": self.created, "updated": self.updated}

    @classmethod
    def from_json_dict(cls, doc):
        return cls(id=doc["id"], label=doc["label"], target=doc["target"],
                   deltas=doc["deltas"], result_summary=doc["result_summary"],
                   created=doc["created"], updated=doc["updated"])


class StrategyStore:
    """Durable store for named interventions: one JSON document per dataset,
    atomically rewritten on every change."""

    def __init__(self, path, dataset_id: str):
        self.path = str(path)
        self.dataset_id = dataset_id
        self._strategies: dict[str, Strategy] = {}
        self._load()

    def _load(self):
        if not os.path.exists(self.path):
            return
        try:
            with open(self.path) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise StorageFailure(f"cannot read strategy store {self.path}: {e}")
        for s in doc.get("strategies", []):
            st = Strategy.from_json_dict(s)
            self._strategies[st.id] = st

    def _flush(self):
        doc = {
            "v": 1,
            "dataset": self.dataset_id,
            "strategies": [s.to_json_dict() for s in self.list()],
        }
        tmp = self.path + ".tmp"
        try:
            with open(tmp, "w") as f:
                json.dump(doc, f, indent=1, sort_keys=True)
            os.replace(tmp, self.path)
        except OSError as e:
            raise StorageFailure(f"cannot write strategy store {self.path}: {e}")

    def save(self, label: str, intervention: Intervention, result_summary: dict) -> Strategy:
        now = time.time()
        st = Strategy(id=uuid.uuid4().hex[:12], label=label,
                      target=intervention.target, deltas=dict(intervention.deltas),
                      result_summary=result_summary, created=now, updated=now)
        self._strategies[st.id] = st
        self._flush()
        return st

    def update(self, strategy_id: str, label: str | None = None,
               result_summary: dict | None = None, deltas: dict | None = None) -> Strategy:
        if strategy_id not in self._strategies:
            raise UnknownStrategy(strategy_id)
        st = self._strategies[strategy_id]
        if label is not None:
            st.label = label
        if deltas is not None:
            st.deltas = dict(deltas)
        if result_summary is not None:
            st.result_summary = result_summary
        st.updated = time.time()
        self._flush()
        return st

    def delete(self, strategy_id: str):
        if strategy_id not in self._strategies:
            raise UnknownStrategy(strategy_id)
        del self._strategies[strategy_id]
        self._flush()

    def get(self, strategy_id: str) -> Strategy:
        if strategy_id not in self._strategies:
            raise UnknownStrategy(strategy_id)
        return self._strategies[strategy_id]

    def list(self) -> list[Strategy]:
        return sorted(self._strategies.values(), key=lambda s: (s.created, s.id))
