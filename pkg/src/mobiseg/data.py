"""City data model: CBGs, demographic attributes, POI densities, and the mobility graph.

Input files are plain CSV/GeoJSON:

  flows.csv         header ``origin,destination,weight``
  demographics.csv  header ``cbg_id,population[,lat,lon],<attr>.<group>,...``
  poi.csv           header ``cbg_id,<poi_type>,...``
  geometry.geojson  FeatureCollection with a ``cbg_id`` property per feature

Datasets are immutable after load and safe to share across threads.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidCoordinate,
    MalformedRow,
    NegativeValue,
    SchemaMismatch,
    UnknownAttribute,
    UnknownCbg,
)

EARTH_RADIUS_KM = 6371.0

# The canonical POI taxonomy; datasets may override it with their own columns.
DEFAULT_POI_TYPES = (
    "food", "shopping", "work", "health", "religious", "service",
    "entertainment", "grocery", "education", "arts_museum",
    "transportation", "sports",
)


@dataclass(frozen=True)
class GroupSchema:
    """A demographic attribute and its ordered group labels."""

    attribute: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise SchemaMismatch("at least 2 groups", f"{len(self.labels)} for {self.attribute}")
        if len(set(self.labels)) != len(self.labels):
            raise SchemaMismatch("unique group labels", f"duplicates in {self.attribute}")

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CbgRecord:
    """One census block group: location, population, group counts, POI densities."""

    id: str
    population: float
    lat: float
    lon: float
    group_counts: dict  # attribute -> np.ndarray of counts
    poi_density: np.ndarray
    boundary: object = None  # GeoJSON geometry dict, UI only


class MobilityGraph:
    """Directed weighted graph of CBG-to-CBG flows.

    Edges are stored in canonical (origin, destination) sort order;
    duplicate ordered pairs are summed on construction.
    """

    def __init__(self, edges):
        agg = {}
        for o, d, w in edges:
            w = float(w)
            if w < 0:
                raise NegativeValue("weight", w)
            key = (o, d)
            agg[key] = agg.get(key, 0.0) + w
        keys = sorted(agg)
        self.origins = [k[0] for k in keys]
        self.dests = [k[1] for k in keys]
        self.weights = np.array([agg[k] for k in keys], dtype=float)
        self.nodes = sorted({n for k in keys for n in k})

    def __len__(self):
        return len(self.weights)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def edges(self):
        for o, d, w in zip(self.origins, self.dests, self.weights):
            yield o, d, float(w)

    def filtered(self, w_min: float) -> "MobilityGraph":
        """Edges with weight >= w_min only. Node set shrinks accordingly."""
        kept = [(o, d, w) for o, d, w in self.edges() if w >= w_min]
        return MobilityGraph(kept)

    def to_list(self):
        return [[o, d, w] for o, d, w in self.edges()]


@dataclass(frozen=True)
class ProportionMatrix:
    """Per-CBG group proportions for one attribute.

    Rows of ``values`` sum to 1 where ``defined`` is True; rows with zero
    total group count are flagged undefined and excluded downstream.
    """

    attribute: str
    values: np.ndarray   # (n_cbgs, n_groups)
    defined: np.ndarray  # (n_cbgs,) bool

    def row(self, idx: int):
        return self.values[idx] if self.defined[idx] else None


class CityDataset:
    """Immutable container for one city's mobility, demographic and POI data."""

    def __init__(self, cbgs: list[CbgRecord], flows: MobilityGraph,
                 attributes: dict[str, GroupSchema], poi_types: tuple[str, ...]):
        if not attributes:
            raise SchemaMismatch("at least one demographic attribute", "none")
        if not poi_types or len(set(poi_types)) != len(poi_types):
            raise SchemaMismatch("non-empty unique POI types", list(poi_types))
        self.cbgs = list(cbgs)
        self.flows = flows
        self.attributes = dict(attributes)
        self.poi_types = tuple(poi_types)

        self.cbg_ids = [c.id for c in self.cbgs]
        self.index = {c.id: i for i, c in enumerate(self.cbgs)}
        if len(self.index) != len(self.cbgs):
            raise SchemaMismatch("unique CBG ids", "duplicates present")
        for node in flows.nodes:
            if node not in self.index:
                raise UnknownCbg(node, "flows")

        self.population = np.array([c.population for c in self.cbgs], dtype=float)
        self.lat = np.array([c.lat for c in self.cbgs], dtype=float)
        self.lon = np.array([c.lon for c in self.cbgs], dtype=float)
        self.poi = np.vstack([c.poi_density for c in self.cbgs]) if self.cbgs \
            else np.zeros((0, len(poi_types)))
        self.counts = {
            name: np.vstack([c.group_counts[name] for c in self.cbgs]).astype(float)
            for name in self.attributes
        }

        # index-form edge arrays for vectorized work
        self.edge_origin = np.array([self.index[o] for o in flows.origins], dtype=int)
        self.edge_dest = np.array([self.index[d] for d in flows.dests], dtype=int)
        self.edge_weight = flows.weights

        self._inflows = None
        self._outflows = None

    # --- derived lookups ---

    def record(self, cbg_id: str) -> CbgRecord:
        return self.cbgs[self.index[cbg_id]]

    def inflow_edges(self, cbg_id: str):
        """(origin_index, weight) arrays for edges into cbg_id."""
        if self._inflows is None:
            by_dest = {}
            for e, d in enumerate(self.edge_dest):
                by_dest.setdefault(int(d), []).append(e)
            self._inflows = {
                d: (self.edge_origin[idx], self.edge_weight[idx])
                for d, idx in ((d, np.array(v)) for d, v in by_dest.items())
            }
        return self._inflows.get(self.index[cbg_id], (np.array([], dtype=int), np.array([])))

    def outflow_edges(self, cbg_id: str):
        """(dest_index, weight) arrays for edges out of cbg_id."""
        if self._outflows is None:
            by_origin = {}
            for e, o in enumerate(self.edge_origin):
                by_origin.setdefault(int(o), []).append(e)
            self._outflows = {
                o: (self.edge_dest[idx], self.edge_weight[idx])
                for o, idx in ((o, np.array(v)) for o, v in by_origin.items())
            }
        return self._outflows.get(self.index[cbg_id], (np.array([], dtype=int), np.array([])))

    def validation_summary(self) -> dict:
        """Counts reported at load time; zero-count CBGs are excluded from
        proportion-based computations rather than imputed."""
        zero_theta = {
            name: [self.cbg_ids[i] for i in np.flatnonzero(self.counts[name].sum(axis=1) == 0)]
            for name in self.attributes
        }
        return {
            "n_cbgs": len(self.cbgs),
            "n_edges": len(self.flows),
            "total_flow": self.flows.total_weight,
            "zero_population_cbgs": [self.cbg_ids[i] for i in np.flatnonzero(self.population == 0)],
            "zero_count_cbgs": zero_theta,
        }

    # --- serialization ---

    def to_dict(self) -> dict:
        return {
            "v": 1,
            "poi_types": list(self.poi_types),
            "attributes": {n: list(s.labels) for n, s in self.attributes.items()},
            "cbgs": [
                {
                    "id": c.id,
                    "population": c.population,
                    "lat": c.lat,
                    "lon": c.lon,
                    "group_counts": {a: [float(x) for x in v] for a, v in c.group_counts.items()},
                    "poi_density": [float(x) for x in c.poi_density],
                    **({"boundary": c.boundary} if c.boundary is not None else {}),
                }
                for c in self.cbgs
            ],
            "flows": self.flows.to_list(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CityDataset":
        attributes = {n: GroupSchema(n, tuple(labels)) for n, labels in doc["attributes"].items()}
        cbgs = [
            CbgRecord(
                id=c["id"],
                population=float(c["population"]),
                lat=float(c["lat"]),
                lon=float(c["lon"]),
                group_counts={a: np.array(v, dtype=float) for a, v in c["group_counts"].items()},
                poi_density=np.array(c["poi_density"], dtype=float),
                boundary=c.get("boundary"),
            )
            for c in doc["cbgs"]
        ]
        flows = MobilityGraph([(o, d, w) for o, d, w in doc["flows"]])
        return cls(cbgs, flows, attributes, tuple(doc["poi_types"]))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, separators=(",", ":"), sort_keys=True)

    @classmethod
    def load(cls, path) -> "CityDataset":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


# --- distances ---

def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km (vectorized), Earth radius 6371.0 km."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return EARTH_RADIUS_KM * 2 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def centroid_distance(a: CbgRecord, b: CbgRecord) -> float:
    """Great-circle distance between two CBG centroids, in kilometers."""
    for r in (a, b):
        if not (math.isfinite(r.lat) and math.isfinite(r.lon)):
            raise InvalidCoordinate(f"non-finite centroid on CBG {r.id!r}")
        if not (-90.0 <= r.lat <= 90.0) or not (-180.0 <= r.lon <= 180.0):
            raise InvalidCoordinate(f"centroid out of range on CBG {r.id!r}")
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


def distances_to(dataset: CityDataset, cbg_id: str) -> np.ndarray:
    """Distances from every CBG in the dataset to the given one."""
    i = dataset.index[cbg_id]
    return haversine_km(dataset.lat, dataset.lon, dataset.lat[i], dataset.lon[i])


# --- proportions ---

def group_proportions(dataset: CityDataset, attribute: str) -> ProportionMatrix:
    """Per-CBG share of each social group; zero-total rows flagged undefined."""
    if attribute not in dataset.attributes:
        raise UnknownAttribute(attribute, tuple(dataset.attributes))
    counts = dataset.counts[attribute]
    totals = counts.sum(axis=1)
    defined = totals > 0
    values = np.zeros_like(counts)
    values[defined] = counts[defined] / totals[defined, None]
    return ProportionMatrix(attribute, values, defined)


# --- ingest ---

def _parse_float(raw, file, line, fieldname):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise MalformedRow(file, line, f"{fieldname}={raw!r} is not a number")
    if math.isnan(v) or math.isinf(v):
        raise MalformedRow(file, line, f"{fieldname}={raw!r} is not finite")
    return v


def _parse_count(raw, file, line, fieldname):
    try:
        v = int(raw)
    except (TypeError, ValueError):
        raise MalformedRow(file, line, f"{fieldname}={raw!r} is not an integer count")
    if v < 0:
        raise NegativeValue(fieldname, v, file, line)
    return v


def _read_rows(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows:
        raise MalformedRow(str(path), 0, "empty file")
    return rows[0], rows[1:]


def _polygon_centroid_area(ring):
    # planar shoelace on (lon, lat); adequate for city-scale extents
    a = 0.0
    cx = 0.0
    cy = 0.0
    n = len(ring)
    for k in range(n):
        x0, y0 = ring[k][0], ring[k][1]
        x1, y1 = ring[(k + 1) % n][0], ring[(k + 1) % n][1]
        cross = x0 * y1 - x1 * y0
        a += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    a *= 0.5
    if a == 0:
        lon = sum(p[0] for p in ring) / n
        lat = sum(p[1] for p in ring) / n
        return lon, lat, 0.0
    return cx / (6 * a), cy / (6 * a), abs(a)


def _geometry_centroid(geom):
    """Area-weighted centroid (lon, lat) of a Polygon/MultiPolygon, outer rings only."""
    if geom["type"] == "Polygon":
        polys = [geom["coordinates"]]
    elif geom["type"] == "MultiPolygon":
        polys = geom["coordinates"]
    else:
        raise SchemaMismatch("Polygon or MultiPolygon", geom.get("type"))
    tot_a = 0.0
    acc_x = 0.0
    acc_y = 0.0
    for rings in polys:
        x, y, a = _polygon_centroid_area(rings[0])
        if a == 0:
            a = 1e-12
        acc_x += x * a
        acc_y += y * a
        tot_a += a
    return acc_x / tot_a, acc_y / tot_a


def load_city_dataset(flows_path, demographics_path, poi_path, geometry_path=None,
                      poi_types=None) -> CityDataset:
    """Load and validate the four documented input files into a CityDataset.

    Duplicate flow edges are summed. Every flow endpoint must appear in
    demographics.csv. Centroids come from geometry when supplied, else from
    lat/lon columns in demographics.csv.
    """
    # demographics: master CBG list + attribute schema
    header, rows = _read_rows(demographics_path)
    dfile = str(demographics_path)
    if not header or header[0] != "cbg_id" or "population" not in header:
        raise SchemaMismatch("header cbg_id,population,...", header)
    has_latlon = "lat" in header and "lon" in header
    attr_cols = []  # (col_index, attribute, group)
    for ci, col in enumerate(header):
        if col in ("cbg_id", "population", "lat", "lon"):
            continue
        if "." not in col:
            raise SchemaMismatch("demographic column named <attr>.<group>", col)
        attr, group = col.split(".", 1)
        attr_cols.append((ci, attr, group))
    if not attr_cols:
        raise SchemaMismatch("at least one <attr>.<group> column", header)
    attr_labels: dict[str, list[str]] = {}
    for _, attr, group in attr_cols:
        attr_labels.setdefault(attr, []).append(group)
    attributes = {a: GroupSchema(a, tuple(labels)) for a, labels in attr_labels.items()}

    pop_col = header.index("population")
    lat_col = header.index("lat") if has_latlon else None
    lon_col = header.index("lon") if has_latlon else None

    demo = {}
    order = []
    for ln, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise MalformedRow(dfile, ln, f"expected {len(header)} fields, got {len(row)}")
        cid = row[0]
        if cid in demo:
            raise MalformedRow(dfile, ln, f"duplicate cbg_id {cid!r}")
        pop = _parse_count(row[pop_col], dfile, ln, "population")
        counts = {a: np.zeros(s.n) for a, s in attributes.items()}
        pos = {a: 0 for a in attributes}
        for ci, attr, _group in attr_cols:
            counts[attr][pos[attr]] = _parse_count(row[ci], dfile, ln, header[ci])
            pos[attr] += 1
        lat = lon = math.nan
        if has_latlon:
            lat = _parse_float(row[lat_col], dfile, ln, "lat")
            lon = _parse_float(row[lon_col], dfile, ln, "lon")
        demo[cid] = {"population": float(pop), "lat": lat, "lon": lon, "counts": counts}
        order.append(cid)

    # poi densities
    header_p, rows_p = _read_rows(poi_path)
    pfile = str(poi_path)
    if not header_p or header_p[0] != "cbg_id" or len(header_p) < 2:
        raise SchemaMismatch("header cbg_id,<poi_type>,...", header_p)
    file_poi_types = tuple(header_p[1:])
    if poi_types is not None and tuple(poi_types) != file_poi_types:
        raise SchemaMismatch(list(poi_types), list(file_poi_types))
    poi_rows = {}
    for ln, row in enumerate(rows_p, start=2):
        if len(row) != len(header_p):
            raise MalformedRow(pfile, ln, f"expected {len(header_p)} fields, got {len(row)}")
        cid = row[0]
        if cid not in demo:
            raise UnknownCbg(cid, pfile)
        dens = np.empty(len(file_poi_types))
        for k, raw in enumerate(row[1:]):
            v = _parse_float(raw, pfile, ln, header_p[k + 1])
            if v < 0:
                raise NegativeValue(header_p[k + 1], v, pfile, ln)
            dens[k] = v
        poi_rows[cid] = dens
    missing_poi = [c for c in order if c not in poi_rows]
    if missing_poi:
        raise SchemaMismatch("poi.csv row for every CBG", f"missing {missing_poi[:5]}")

    # geometry (optional): centroids + boundaries
    boundaries = {}
    if geometry_path is not None:
        with open(geometry_path) as f:
            gj = json.load(f)
        if gj.get("type") != "FeatureCollection":
            raise SchemaMismatch("FeatureCollection", gj.get("type"))
        for feat in gj.get("features", []):
            cid = feat.get("properties", {}).get("cbg_id")
            if cid is None:
                raise SchemaMismatch("feature property cbg_id", "missing")
            if cid not in demo:
                raise UnknownCbg(cid, str(geometry_path))
            lon, lat = _geometry_centroid(feat["geometry"])
            demo[cid]["lat"] = lat
            demo[cid]["lon"] = lon
            boundaries[cid] = feat["geometry"]
        missing_geo = [c for c in order if c not in boundaries]
        if missing_geo:
            raise SchemaMismatch("geometry feature for every CBG", f"missing {missing_geo[:5]}")
    elif not has_latlon:
        raise SchemaMismatch("lat,lon columns in demographics.csv or a geometry file", "neither")

    for cid in order:
        if not (math.isfinite(demo[cid]["lat"]) and math.isfinite(demo[cid]["lon"])):
            raise InvalidCoordinate(f"no usable centroid for CBG {cid!r}")

    # flows
    header_f, rows_f = _read_rows(flows_path)
    ffile = str(flows_path)
    if header_f != ["origin", "destination", "weight"]:
        raise SchemaMismatch(["origin", "destination", "weight"], header_f)
    edges = []
    for ln, row in enumerate(rows_f, start=2):
        if len(row) != 3:
            raise MalformedRow(ffile, ln, f"expected 3 fields, got {len(row)}")
        o, d, raw_w = row
        w = _parse_float(raw_w, ffile, ln, "weight")
        if w < 0:
            raise NegativeValue("weight", w, ffile, ln)
        if o not in demo:
            raise UnknownCbg(o, ffile)
        if d not in demo:
            raise UnknownCbg(d, ffile)
        edges.append((o, d, w))

    cbgs = [
        CbgRecord(
            id=cid,
            population=demo[cid]["population"],
            lat=demo[cid]["lat"],
            lon=demo[cid]["lon"],
            group_counts=demo[cid]["counts"],
            poi_density=poi_rows[cid],
            boundary=boundaries.get(cid),
        )
        for cid in order
    ]
    return CityDataset(cbgs, MobilityGraph(edges), attributes, file_poi_types)
