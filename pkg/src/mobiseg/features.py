"""Feature vectors for origin-destination pairs and their scaling.

A pair's raw feature layout is:

    [origin_population, dest_population,
     origin POI densities..., dest POI densities...,
     destination visitor mix per attribute... (only for +V variants),
     distance_km]

Population and distance slots are log1p-transformed before z-scoring;
scaling statistics always come from the training split alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CityDataset, group_proportions, haversine_km
from .errors import MissingVisitorMix, SchemaMismatch
from .segregation import visitor_mix

VARIANTS = ("g", "dg", "dg+s", "dg+v", "dg+s+v")


def variant_is_segmented(variant: str) -> bool:
    return variant in ("dg+s", "dg+s+v")


def variant_has_visitor_mix(variant: str) -> bool:
    return variant in ("dg+v", "dg+s+v")


@dataclass(frozen=True)
class FeatureSchema:
    """Names and positions of every feature slot."""

    poi_types: tuple
    visitor_attrs: tuple  # ((attribute, (label, ...)), ...), empty unless +V

    @property
    def slots(self) -> list[str]:
        names = ["origin_population", "dest_population"]
        names += [f"origin_poi.{t}" for t in self.poi_types]
        names += [f"dest_poi.{t}" for t in self.poi_types]
        for attr, labels in self.visitor_attrs:
            names += [f"visitor.{attr}.{lbl}" for lbl in labels]
        names.append("distance_km")
        return names

    @property
    def n(self) -> int:
        return 2 + 2 * len(self.poi_types) + sum(len(ls) for _, ls in self.visitor_attrs) + 1

    @property
    def log_slots(self) -> np.ndarray:
        """Mask of heavy-tailed slots (populations, distance) to log1p first."""
        mask = np.zeros(self.n, dtype=bool)
        mask[0] = mask[1] = mask[self.n - 1] = True
        return mask

    def dest_poi_slot(self, poi_type: str) -> int:
        return 2 + len(self.poi_types) + self.poi_types.index(poi_type)

    @property
    def dest_poi_slots(self) -> list[int]:
        return [self.dest_poi_slot(t) for t in self.poi_types]

    def to_json_dict(self):
        return {"poi_types": list(self.poi_types),
                "visitor_attrs": [[a, list(ls)] for a, ls in self.visitor_attrs]}

    @classmethod
    def from_json_dict(cls, doc):
        return cls(tuple(doc["poi_types"]),
                   tuple((a, tuple(ls)) for a, ls in doc["visitor_attrs"]))


def build_schema(dataset: CityDataset, variant: str) -> FeatureSchema:
    if variant not in VARIANTS:
        raise SchemaMismatch(f"variant in {VARIANTS}", variant)
    visitor_attrs = ()
    if variant_has_visitor_mix(variant):
        visitor_attrs = tuple(
            (name, dataset.attributes[name].labels) for name in dataset.attributes)
    return FeatureSchema(tuple(dataset.poi_types), visitor_attrs)


class VisitorMixTable:
    """Per-destination visitor mixes for every attribute, concatenated in
    schema order; rows are undefined where a CBG has no valid inflow."""

    def __init__(self, values: np.ndarray, defined: np.ndarray, attrs: tuple):
        self.values = values
        self.defined = defined
        self.attrs = attrs

    @classmethod
    def compute(cls, dataset: CityDataset) -> "VisitorMixTable":
        attrs = tuple((name, dataset.attributes[name].labels) for name in dataset.attributes)
        width = sum(len(ls) for _, ls in attrs)
        values = np.zeros((len(dataset.cbgs), width))
        defined = np.ones(len(dataset.cbgs), dtype=bool)
        thetas = {name: group_proportions(dataset, name) for name in dataset.attributes}
        for i, cid in enumerate(dataset.cbg_ids):
            col = 0
            for name, labels in attrs:
                try:
                    mix = visitor_mix(dataset, thetas[name], cid)
                    values[i, col:col + len(labels)] = mix.pi
                except Exception:
                    defined[i] = False
                col += len(labels)
        return cls(values, defined, attrs)


def pair_features(dataset: CityDataset, origin_idx, dest_idx,
                  schema: FeatureSchema, mix_table: VisitorMixTable | None = None) -> np.ndarray:
    """Raw feature matrix for parallel arrays of origin/destination indices."""
    origin_idx = np.asarray(origin_idx, dtype=int)
    dest_idx = np.asarray(dest_idx, dtype=int)
    rows = np.empty((len(origin_idx), schema.n))
    rows[:, 0] = dataset.population[origin_idx]
    rows[:, 1] = dataset.population[dest_idx]
    p = len(schema.poi_types)
    rows[:, 2:2 + p] = dataset.poi[origin_idx]
    rows[:, 2 + p:2 + 2 * p] = dataset.poi[dest_idx]
    col = 2 + 2 * p
    if schema.visitor_attrs:
        if mix_table is None:
            raise MissingVisitorMix("schema has visitor slots but no mix table given")
        if not np.all(mix_table.defined[dest_idx]):
            bad = dest_idx[~mix_table.defined[dest_idx]][0]
            raise MissingVisitorMix(
                f"destination {dataset.cbg_ids[int(bad)]!r} has no defined visitor mix")
        width = mix_table.values.shape[1]
        rows[:, col:col + width] = mix_table.values[dest_idx]
        col += width
    rows[:, col] = haversine_km(
        dataset.lat[origin_idx], dataset.lon[origin_idx],
        dataset.lat[dest_idx], dataset.lon[dest_idx])
    return rows


def build_feature_vector(dataset: CityDataset, origin: str, dest: str,
                         mix_table: VisitorMixTable | None, variant: str):
    """One pair's raw feature vector plus the schema describing its slots."""
    schema = build_schema(dataset, variant)
    row = pair_features(dataset, [dataset.index[origin]], [dataset.index[dest]],
                        schema, mix_table)[0]
    return row, schema


@dataclass
class FeatureScaler:
    """Per-slot z-scoring with log1p pre-transform on heavy-tailed slots."""

    mean: np.ndarray
    std: np.ndarray
    log_mask: np.ndarray

    @classmethod
    def fit(cls, raw_rows: np.ndarray, schema: FeatureSchema) -> "FeatureScaler":
        x = raw_rows.astype(float).copy()
        mask = schema.log_slots
        x[:, mask] = np.log1p(x[:, mask])
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std == 0] = 1.0
        return cls(mean=mean, std=std, log_mask=mask)

    def transform(self, raw_rows: np.ndarray) -> np.ndarray:
        x = np.asarray(raw_rows, dtype=float).copy()
        if x.ndim == 1:
            x = x[None, :]
        x[:, self.log_mask] = np.log1p(x[:, self.log_mask])
        return (x - self.mean) / self.std

    def to_json_dict(self):
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std],
                "log_mask": [bool(v) for v in self.log_mask]}

    @classmethod
    def from_json_dict(cls, doc):
        return cls(np.array(doc["mean"]), np.array(doc["std"]),
                   np.array(doc["log_mask"], dtype=bool))
