"""HTTP facade over the analysis pipeline for the coordinated-views UI.

One session at a time: uploading a dataset activates it, detection fixes the
attribute of interest and partition, training jobs run on a background worker
(one at a time, 409 on overlap), and what-if requests are read-only. Every
payload carries a top-level "v": 1.
"""

from __future__ import annotations

import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.responses import JSONResponse

from .community import OTHERS_ID, DetectionConfig, detect_communities
from .config import ServiceConfig
from .data import CityDataset, group_proportions, load_city_dataset
from .errors import MobisegError, NoInflow, UnknownStrategy, UntrainedModel
from .evalmetrics import cpc as cpc_metric
from .features import VisitorMixTable
from .models import FlowPredictor, TrainConfig, evaluate_variants
from .segregation import score_cbgs
from .whatif import Intervention, StrategyStore, apply_intervention, training_background

AGGREGATIONS = ("mean", "median", "sum", "std")


class Session:
    """Mutable service state: active dataset, partition, trained models."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.datasets: dict[str, CityDataset] = {}
        self.active_id: str | None = None
        self.attribute: str | None = None
        self.partition = None
        self.detect_config: DetectionConfig | None = None
        self.models = {}            # (attribute, variant) -> GroupModelSet
        self.current_model_key = None
        self.metric_report = None
        self.job = None             # {"id","status","progress","error","params"}
        self.job_lock = threading.Lock()
        self._predictors = {}
        self._backgrounds = {}
        self._mix_tables = {}
        self._stores = {}

    # --- helpers ---

    @property
    def dataset(self) -> CityDataset | None:
        return self.datasets.get(self.active_id)

    def mix_table(self, dataset_id: str) -> VisitorMixTable:
        if dataset_id not in self._mix_tables:
            self._mix_tables[dataset_id] = VisitorMixTable.compute(self.datasets[dataset_id])
        return self._mix_tables[dataset_id]

    def predictor(self) -> FlowPredictor:
        if self.current_model_key is None:
            raise UntrainedModel("train a model first")
        key = (self.active_id, self.current_model_key)
        if key not in self._predictors:
            self._predictors[key] = FlowPredictor(
                self.dataset, self.models[self.current_model_key],
                mix_table=self.mix_table(self.active_id))
        return self._predictors[key]

    def background(self):
        key = (self.active_id, self.current_model_key)
        if key not in self._backgrounds:
            predictor = self.predictor()
            self._backgrounds[key] = training_background(
                self.dataset, predictor.model_set, predictor, k=self.config.background_k)
        return self._backgrounds[key]

    def store(self) -> StrategyStore:
        if self.active_id not in self._stores:
            os.makedirs(self.config.data_dir, exist_ok=True)
            path = os.path.join(self.config.data_dir, f"strategies-{self.active_id}.json")
            self._stores[self.active_id] = StrategyStore(path, self.active_id)
        return self._stores[self.active_id]


def _error_payload(exc: MobisegError) -> dict:
    doc = {"v": 1, "error": {"type": type(exc).__name__, "message": str(exc)}}
    for attr in ("file", "line", "cbg_id", "field"):
        if getattr(exc, attr, None) is not None:
            doc["error"][attr] = getattr(exc, attr)
    return doc


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig.load()
    app = FastAPI(title="mobiseg service")
    session = Session(config)
    app.state.session = session

    @app.exception_handler(MobisegError)
    async def mobiseg_error_handler(request: Request, exc: MobisegError):
        status = 404 if isinstance(exc, (UnknownStrategy, NoInflow)) else 400
        if isinstance(exc, UntrainedModel):
            status = 409
        return JSONResponse(status_code=status, content=_error_payload(exc))

    def _http_error(status: int, message: str):
        return JSONResponse(status_code=status,
                            content={"v": 1, "error": {"type": "http", "message": message}})

    def _summary(dataset_id: str) -> dict:
        ds = session.datasets[dataset_id]
        v = ds.validation_summary()
        return {
            "v": 1,
            "id": dataset_id,
            "n_cbgs": v["n_cbgs"],
            "n_edges": v["n_edges"],
            "total_flow": v["total_flow"],
            "attributes": {n: list(s.labels) for n, s in ds.attributes.items()},
            "poi_types": list(ds.poi_types),
            "validation": {
                "zero_population_cbgs": v["zero_population_cbgs"],
                "zero_count_cbgs": v["zero_count_cbgs"],
            },
        }

    # --- datasets ---

    @app.post("/datasets", status_code=201)
    async def upload_dataset(flows: UploadFile = File(...),
                             demographics: UploadFile = File(...),
                             poi: UploadFile = File(...),
                             geometry: UploadFile | None = File(None)):
        os.makedirs(config.data_dir, exist_ok=True)
        dataset_id = uuid.uuid4().hex[:10]
        updir = os.path.join(config.data_dir, f"upload-{dataset_id}")
        os.makedirs(updir, exist_ok=True)
        paths = {}
        for name, up in (("flows", flows), ("demographics", demographics),
                         ("poi", poi), ("geometry", geometry)):
            if up is None:
                continue
            path = os.path.join(updir, f"{name}{'.geojson' if name == 'geometry' else '.csv'}")
            with open(path, "wb") as f:
                f.write(await up.read())
            paths[name] = path
        ds = load_city_dataset(paths["flows"], paths["demographics"], paths["poi"],
                               geometry_path=paths.get("geometry"))
        session.datasets[dataset_id] = ds
        session.active_id = dataset_id
        session.partition = None
        session.attribute = None
        session.current_model_key = None
        session.metric_report = None
        return _summary(dataset_id)

    @app.get("/datasets/{dataset_id}/summary")
    def dataset_summary(dataset_id: str):
        if dataset_id not in session.datasets:
            return _http_error(404, f"no dataset {dataset_id!r}")
        return _summary(dataset_id)

    # --- communities ---

    @app.post("/communities/detect")
    def communities_detect(body: dict):
        ds = session.dataset
        if ds is None:
            return _http_error(409, "no dataset loaded")
        attribute = body.get("attribute")
        if attribute not in ds.attributes:
            return _http_error(400, f"unknown attribute {attribute!r}")
        cfg = DetectionConfig(
            w_min=float(body.get("w_min", 0.0)),
            max_communities=int(body.get("max_communities", 10)),
            resolution=float(body.get("resolution", 1.0)),
            seed=int(body.get("seed", 0)))
        partition = detect_communities(ds.flows, cfg, all_nodes=ds.cbg_ids)
        session.partition = partition
        session.detect_config = cfg
        session.attribute = attribute

        signatures = {}
        for attr in ds.attributes:
            theta = group_proportions(ds, attr)
            per_comm = []
            groups_members = list(enumerate(partition.communities))
            if partition.others:
                groups_members.append((OTHERS_ID, partition.others))
            for comm_id, members in groups_members:
                idx = np.array([ds.index[m] for m in members])
                idx = idx[theta.defined[idx]]
                if len(idx) == 0:
                    rows = [{"q1": None, "median": None, "q3": None}
                            for _ in ds.attributes[attr].labels]
                else:
                    vals = theta.values[idx]
                    q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75], axis=0)
                    rows = [{"q1": float(q1[g]), "median": float(med[g]), "q3": float(q3[g])}
                            for g in range(vals.shape[1])]
                per_comm.append({"community": comm_id, "groups": rows})
            signatures[attr] = per_comm
        doc = partition.to_json_dict()
        doc["signatures"] = signatures
        doc["attribute"] = attribute
        return doc

    # --- flow matrix ---

    @app.get("/flow-matrix")
    def flow_matrix(aggregation: str = "sum"):
        ds = session.dataset
        if ds is None or session.partition is None or session.attribute is None:
            return _http_error(409, "detect communities first")
        if aggregation not in AGGREGATIONS:
            return _http_error(400, f"aggregation must be one of {AGGREGATIONS}")
        partition = session.partition
        theta = group_proportions(ds, session.attribute)
        comm_ids = list(range(len(partition.communities)))
        if partition.others:
            comm_ids.append(OTHERS_ID)
        comm_of = np.full(len(ds.cbgs), OTHERS_ID, dtype=int)
        for cid, members in enumerate(partition.communities):
            for m in members:
                comm_of[ds.index[m]] = cid

        o_comm = comm_of[ds.edge_origin]
        d_comm = comm_of[ds.edge_dest]
        w = ds.edge_weight
        theta_o = theta.values[ds.edge_origin]
        defined_o = theta.defined[ds.edge_origin]

        def agg(mask) -> float:
            ws = w[mask]
            if len(ws) == 0:
                return 0.0
            if aggregation == "mean":
                return float(ws.mean())
            if aggregation == "median":
                return float(np.median(ws))
            if aggregation == "std":
                return float(ws.std())
            return float(ws.sum())

        def shares(mask) -> list:
            m = mask & defined_o & (w > 0)
            tw = w[m].sum()
            if tw <= 0:
                return [0.0] * theta.values.shape[1]
            mix = (theta_o[m] * w[m, None]).sum(axis=0) / tw
            return [float(x) for x in mix]

        labels = [str(c) if c != OTHERS_ID else "others" for c in comm_ids] + ["total"]
        n = len(comm_ids)
        cells = []
        for a in comm_ids + ["total"]:
            row = []
            mask_a = np.ones(len(w), dtype=bool) if a == "total" else (o_comm == a)
            for b in comm_ids + ["total"]:
                mask_b = np.ones(len(w), dtype=bool) if b == "total" else (d_comm == b)
                mask = mask_a & mask_b
                row.append({"value": agg(mask), "group_shares": shares(mask)})
            cells.append(row)
        max_v = max((c["value"] for row in cells for c in row), default=0.0)
        for row in cells:
            for c in row:
                c["shade"] = float(np.log1p(c["value"]) / np.log1p(max_v)) if max_v > 0 else 0.0
        return {"v": 1, "aggregation": aggregation, "labels": labels,
                "attribute": session.attribute, "cells": cells}

    # --- ranking ---

    @app.get("/cbgs/ranking")
    def ranking(community: int, k_bridge: int | None = None):
        ds = session.dataset
        if ds is None or session.partition is None or session.attribute is None:
            return _http_error(409, "detect communities first")
        k_bridge = k_bridge or config.k_bridge
        partition = session.partition
        if community == OTHERS_ID:
            members = partition.others
        elif 0 <= community < len(partition.communities):
            members = partition.communities[community]
        else:
            return _http_error(404, f"no community {community}")
        if not members:
            return _http_error(404, f"community {community} is empty")
        theta = group_proportions(ds, session.attribute)
        rows = score_cbgs(ds, theta, members, k_bridge=k_bridge)
        return {"v": 1, "community": community, "k_bridge": k_bridge,
                "attribute": session.attribute,
                "rows": [r.to_json_dict() for r in rows]}

    # --- dorling inflows ---

    @app.get("/cbgs/{cbg_id}/inflows")
    def inflows(cbg_id: str, k_bridge: int | None = None):
        ds = session.dataset
        if ds is None:
            return _http_error(409, "no dataset loaded")
        if cbg_id not in ds.index:
            return _http_error(404, f"no CBG {cbg_id!r}")
        if session.attribute is None:
            return _http_error(409, "detect communities first")
        k_bridge = k_bridge or config.k_bridge
        theta = group_proportions(ds, session.attribute)
        from .segregation import nearest_neighbors

        eligible = np.ones(len(ds.cbgs), dtype=bool)
        k = min(k_bridge, len(ds.cbgs) - 1)
        nbr = nearest_neighbors(ds, cbg_id, k, eligible)
        t_idx = ds.index[cbg_id]
        inflow_idx, inflow_w = ds.inflow_edges(cbg_id)
        flow_to_target = {int(i): float(wv) for i, wv in zip(inflow_idx, inflow_w)}

        # per-group inflow denominator for contribution shares
        denom = np.zeros(theta.values.shape[1])
        for i, wv in flow_to_target.items():
            if theta.defined[i] and i != t_idx:
                denom += theta.values[i] * wv

        def comm_of(idx: int):
            if session.partition is None:
                return None
            return session.partition.assignment.get(ds.cbg_ids[idx], OTHERS_ID)

        def entry(idx: int) -> dict:
            wv = flow_to_target.get(idx, 0.0)
            th = theta.values[idx] if theta.defined[idx] else None
            contrib = None
            if th is not None and wv > 0:
                contrib = [float(th[g] * wv / denom[g]) if denom[g] > 0 else 0.0
                           for g in range(len(th))]
            pop = float(ds.population[idx])
            return {
                "cbg": ds.cbg_ids[idx],
                "community": comm_of(idx),
                "population": pop,
                "theta": [float(x) for x in th] if th is not None else None,
                "flow_to_target": wv,
                "flow_share_of_population": (wv / pop) if pop > 0 else None,
                "group_contribution": contrib,
                "boundary": ds.cbgs[idx].boundary,
            }

        neighbor_ids = sorted(set(int(i) for i in nbr))
        target_cpc = None
        try:
            predictor = session.predictor()
            res = apply_intervention(predictor, Intervention(cbg_id, {}),
                                     k_bridge_context=k_bridge, compute_shap=False)
            pred = []
            actual = []
            for origin in res.origins:
                pred.append(sum(res.flow_before[g].get(origin, 0.0) for g in res.groups))
                actual.append(flow_to_target.get(ds.index[origin], 0.0))
            if sum(pred) + sum(actual) > 0:
                target_cpc = cpc_metric(np.array(pred), np.array(actual))
        except UntrainedModel:
            pass
        return {
            "v": 1,
            "target": entry(t_idx),
            "neighbors": [entry(i) for i in neighbor_ids],
            "k_bridge": k_bridge,
            "cpc": target_cpc,
        }

    # --- model training ---

    def _run_training(job: dict, params: dict):
        try:
            ds = session.datasets[params["dataset_id"]]
            cfg = TrainConfig(
                attribute=params["attribute"], variant=params["variant"],
                k_dest=params.get("k_dest") or config.k_dest,
                epochs=params.get("epochs", 20), runs=params.get("runs", 5),
                seed=params.get("seed", 0))
            variants = params.get("variants") or [cfg.variant]
            report, trained = evaluate_variants(ds, cfg, variants=variants)
            session.metric_report = report
            for (variant, run), model_set in trained.items():
                if run == cfg.runs - 1:
                    session.models[(cfg.attribute, variant)] = model_set
            session.current_model_key = (cfg.attribute, params["variant"])
            job["status"] = "done"
            job["progress"] = 1.0
        except Exception as e:  # propagate to the status endpoint
            job["status"] = "failed"
            job["error"] = f"{type(e).__name__}: {e}"
        finally:
            session.job_lock.release()

    @app.post("/model/train", status_code=202)
    def model_train(body: dict):
        ds = session.dataset
        if ds is None:
            return _http_error(409, "no dataset loaded")
        attribute = body.get("attribute") or session.attribute
        if attribute not in ds.attributes:
            return _http_error(400, f"unknown attribute {attribute!r}")
        variant = body.get("variant", "dg+s+v")
        if not session.job_lock.acquire(blocking=False):
            return _http_error(409, "a training job is already running")
        job = {"id": uuid.uuid4().hex[:8], "status": "running", "progress": 0.0,
               "error": None,
               "params": {"attribute": attribute, "variant": variant}}
        session.job = job
        params = {"dataset_id": session.active_id, "attribute": attribute,
                  "variant": variant, "epochs": int(body.get("epochs", 20)),
                  "runs": int(body.get("runs", 5)), "seed": int(body.get("seed", 0)),
                  "k_dest": body.get("k_dest"), "variants": body.get("variants")}
        thread = threading.Thread(target=_run_training, args=(job, params), daemon=True)
        thread.start()
        return {"v": 1, "job": job["id"]}

    @app.get("/model/jobs/{job_id}")
    def job_status(job_id: str):
        if session.job is None or session.job["id"] != job_id:
            return _http_error(404, f"no job {job_id!r}")
        j = session.job
        return {"v": 1, "id": j["id"], "status": j["status"],
                "progress": j["progress"], "error": j["error"], "params": j["params"]}

    @app.get("/model/metrics")
    def model_metrics():
        if session.metric_report is None:
            return _http_error(404, "no completed training yet")
        return session.metric_report.to_json_dict()

    # --- feature impact & what-if ---

    @app.get("/cbgs/{cbg_id}/feature-impact")
    def feature_impact(cbg_id: str, group: str | None = None):
        ds = session.dataset
        if ds is None:
            return _http_error(409, "no dataset loaded")
        if cbg_id not in ds.index:
            return _http_error(404, f"no CBG {cbg_id!r}")
        predictor = session.predictor()
        res = apply_intervention(
            predictor, Intervention(cbg_id, {}),
            k_bridge_context=config.k_bridge, background=session.background(),
            shap_samples=config.feature_impact_samples,
            shap_max_origins=config.feature_impact_max_origins)
        doc = res.shap_report or {"v": 1, "groups": []}
        if group is not None:
            doc = dict(doc)
            doc["groups"] = [g for g in doc.get("groups", []) if g["group"] == group]
        doc["target"] = cbg_id
        return doc

    @app.post("/whatif")
    def whatif(body: dict):
        ds = session.dataset
        if ds is None:
            return _http_error(409, "no dataset loaded")
        target = body.get("target")
        deltas = {k: float(v) for k, v in (body.get("deltas") or {}).items()}
        predictor = session.predictor()
        res = apply_intervention(
            predictor, Intervention(target, deltas),
            k_bridge_context=int(body.get("k_bridge", config.k_bridge)),
            background=session.background(),
            shap_samples=config.whatif_shap_samples,
            shap_max_origins=config.whatif_shap_max_origins,
            compute_shap=bool(body.get("compute_shap", True)))
        doc = res.to_json_dict()
        doc["latency_budget_s"] = config.latency_budget_s
        return doc

    # --- strategies ---

    @app.get("/strategies")
    def strategies_list():
        if session.dataset is None:
            return _http_error(409, "no dataset loaded")
        return {"v": 1, "dataset": session.active_id,
                "strategies": [s.to_json_dict() for s in session.store().list()]}

    @app.post("/strategies", status_code=201)
    def strategies_save(body: dict):
        if session.dataset is None:
            return _http_error(409, "no dataset loaded")
        target = body.get("target")
        deltas = {k: float(v) for k, v in (body.get("deltas") or {}).items()}
        iv = Intervention(target, deltas)
        predictor = session.predictor()
        res = apply_intervention(predictor, iv, k_bridge_context=config.k_bridge,
                                 background=session.background(),
                                 compute_shap=False)
        st = session.store().save(body.get("label", target), iv, res.summary())
        return {"v": 1, "strategy": st.to_json_dict()}

    @app.put("/strategies/{strategy_id}")
    def strategies_update(strategy_id: str, body: dict):
        if session.dataset is None:
            return _http_error(409, "no dataset loaded")
        store = session.store()
        st = store.get(strategy_id)
        deltas = body.get("deltas")
        summary = None
        if deltas is not None:
            deltas = {k: float(v) for k, v in deltas.items()}
            iv = Intervention(st.target, deltas)
            res = apply_intervention(session.predictor(), iv,
                                     k_bridge_context=config.k_bridge,
                                     background=session.background(),
                                     compute_shap=False)
            summary = res.summary()
        st = store.update(strategy_id, label=body.get("label"),
                          result_summary=summary, deltas=deltas)
        return {"v": 1, "strategy": st.to_json_dict()}

    @app.delete("/strategies/{strategy_id}")
    def strategies_delete(strategy_id: str):
        if session.dataset is None:
            return _http_error(409, "no dataset loaded")
        session.store().delete(strategy_id)
        return {"v": 1, "deleted": strategy_id}

    # --- feature distributions for the KDE panel ---

    @app.get("/features/distributions")
    def feature_distributions():
        ds = session.dataset
        if ds is None:
            return _http_error(409, "no dataset loaded")
        return {
            "v": 1,
            "poi_types": list(ds.poi_types),
            "densities": {t: [float(x) for x in ds.poi[:, k]]
                          for k, t in enumerate(ds.poi_types)},
            "population": [float(x) for x in ds.population],
        }

    @app.get("/config")
    def get_config():
        return {"v": 1, **config.to_json_dict()}

    return app


def main():  # pragma: no cover - manual entry point
    import uvicorn

    config = ServiceConfig.load(os.environ.get("MOBISEG_CONFIG"))
    uvicorn.run(create_app(config), host="127.0.0.1", port=config.port)


if __name__ == "__main__":  # pragma: no cover
    main()
