"""Batch command-line driver: ingest, synthesize, detect, rank, train,
evaluate, and what-if without the HTTP service.

Exit codes: 0 on success, 2 on any validation or usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .community import DetectionConfig, detect_communities
from .data import CityDataset, group_proportions, load_city_dataset
from .errors import MobisegError
from .models import FlowPredictor, GroupModelSet, TrainConfig, evaluate_variants, train
from .segregation import score_cbgs
from .synth import SynthConfig, generate_city, write_city_csv
from .whatif import Intervention, apply_intervention


def _set_item(item: str):
    name, sep, raw = item.partition("=")
    if not sep or not name or not raw:
        raise argparse.ArgumentTypeError(
            f"--set expects <poi_type>=<density>, got {item!r}")
    try:
        return name, float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--set {item!r}: density is not a number")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobiseg",
                                description="mobility-segregation analytics toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="load the CSV bundle into one dataset file")
    sp.add_argument("--flows", required=True)
    sp.add_argument("--demo", required=True)
    sp.add_argument("--poi", required=True)
    sp.add_argument("--geo", default=None)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic city as CSV files")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--cbgs", type=int, default=100)
    sp.add_argument("--groups", type=int, default=2)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.7)
    sp.add_argument("--homophily", type=float, default=0.5)
    sp.add_argument("--extent-km", type=float, default=20.0)
    sp.add_argument("--rate", type=float, default=0.6)
    sp.add_argument("--decay", type=float, default=2.0)
    sp.add_argument("--affinity-strength", type=float, default=1.0)
    sp.add_argument("--placement-coupling", type=float, default=0.8)
    sp.add_argument("--anchors-per-group", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("communities", help="detect mobility-based communities")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--attr", required=True)
    sp.add_argument("--wmin", type=float, default=0.0)
    sp.add_argument("--max", type=int, default=10)
    sp.add_argument("--resolution", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("rank", help="rank a community's CBGs by TOPSIS")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--attr", default=None)
    sp.add_argument("--community", type=int, required=True)
    sp.add_argument("--k-bridge", type=int, default=20)
    sp.add_argument("--wmin", type=float, default=0.0)
    sp.add_argument("--max", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("train", help="train one flow-model variant")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--attr", required=True)
    sp.add_argument("--variant", default="dg+s+v")
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--runs", type=int, default=5)
    sp.add_argument("--k-dest", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--lr", type=float, default=5e-4)
    sp.add_argument("--out", default="model.json")

    sp = sub.add_parser("evaluate", help="run the full experiment protocol")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--attr", default=None)
    sp.add_argument("--variants", default="g,dg,dg+s,dg+v,dg+s+v")
    sp.add_argument("--epochs", type=int, default=20)
    sp.add_argument("--runs", type=int, default=5)
    sp.add_argument("--k-dest", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="metrics.csv")
    sp.add_argument("--deciles", default="deciles.csv")

    sp = sub.add_parser("whatif", help="evaluate a POI intervention on a target CBG")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--model", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--set", action="append", default=[], type=_set_item,
                    metavar="POI=DENSITY", help="new absolute density, repeatable")
    sp.add_argument("--k-bridge", type=int, default=30)
    sp.add_argument("--shap", action="store_true", help="include the attribution preview")
    return p


def _emit(doc, out_path=None):
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out_path:
        with open(out_path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _load_dataset(path) -> CityDataset:
    return CityDataset.load(path)


def _default_attr(dataset: CityDataset, attr):
    if attr:
        return attr
    return next(iter(dataset.attributes))


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            ds = load_city_dataset(args.flows, args.demo, args.poi, geometry_path=args.geo)
            ds.save(args.out)
            _emit({"ok": True, "out": args.out, "hash": ds.content_hash(),
                   **{k: v for k, v in ds.validation_summary().items()
                      if k in ("n_cbgs", "n_edges", "total_flow")}})

        elif args.command == "synth":
            cfg = SynthConfig(seed=args.seed, n_cbgs=args.cbgs, n_groups=args.groups,
                              spatial_segregation=args.lam, homophily=args.homophily,
                              extent_km=args.extent_km, mobility_rate=args.rate,
                              distance_decay=args.decay,
                              poi_affinity_strength=args.affinity_strength,
                              poi_placement_coupling=args.placement_coupling,
                              anchors_per_group=args.anchors_per_group)
            ds, _truth = generate_city(cfg)
            write_city_csv(ds, args.out)
            _emit({"ok": True, "out": args.out, "hash": ds.content_hash(),
                   "n_cbgs": len(ds.cbgs), "n_edges": len(ds.flows)})

        elif args.command == "communities":
            ds = _load_dataset(args.dataset)
            if args.attr not in ds.attributes:
                raise MobisegError(f"unknown attribute {args.attr!r}")
            part = detect_communities(
                ds.flows,
                DetectionConfig(w_min=args.wmin, max_communities=args.max,
                                resolution=args.resolution, seed=args.seed),
                all_nodes=ds.cbg_ids)
            _emit(part.to_json_dict(), args.out)

        elif args.command == "rank":
            ds = _load_dataset(args.dataset)
            attr = _default_attr(ds, args.attr)
            part = detect_communities(
                ds.flows, DetectionConfig(w_min=args.wmin, max_communities=args.max,
                                          seed=args.seed),
                all_nodes=ds.cbg_ids)
            if args.community == part.others_id:
                members = part.others
            elif 0 <= args.community < len(part.communities):
                members = part.communities[args.community]
            else:
                raise MobisegError(f"no community {args.community}")
            theta = group_proportions(ds, attr)
            rows = score_cbgs(ds, theta, members, k_bridge=args.k_bridge)
            _emit({"v": 1, "community": args.community, "attribute": attr,
                   "rows": [r.to_json_dict() for r in rows]}, args.out)

        elif args.command == "train":
            ds = _load_dataset(args.dataset)
            cfg = TrainConfig(attribute=args.attr, variant=args.variant,
                              k_dest=args.k_dest, epochs=args.epochs, runs=args.runs,
                              seed=args.seed, learning_rate=args.lr)
            model = None
            for run_i in range(args.runs):
                model = train(ds, cfg, run=run_i)
            model.save(args.out)
            _emit({"ok": True, "out": args.out, "variant": args.variant,
                   "runs": args.runs,
                   "final_epoch_loss": {k: v[-1] for k, v in model.epoch_losses.items()}})

        elif args.command == "evaluate":
            ds = _load_dataset(args.dataset)
            attr = _default_attr(ds, args.attr)
            variants = [v.strip() for v in args.variants.split(",") if v.strip()]
            cfg = TrainConfig(attribute=attr, variant=variants[0], k_dest=args.k_dest,
                              epochs=args.epochs, runs=args.runs, seed=args.seed)
            report, _models = evaluate_variants(ds, cfg, variants=variants)
            with open(args.out, "w") as f:
                f.write(report.metrics_csv())
            with open(args.deciles, "w") as f:
                f.write(report.deciles_csv())
            _emit({"ok": True, "metrics": args.out, "deciles": args.deciles,
                   "means": report.means})

        elif args.command == "whatif":
            ds = _load_dataset(args.dataset)
            deltas = dict(getattr(args, "set"))
            model = GroupModelSet.load(args.model)
            predictor = FlowPredictor(ds, model)
            res = apply_intervention(predictor, Intervention(args.target, deltas),
                                     k_bridge_context=args.k_bridge,
                                     compute_shap=args.shap)
            doc = res.to_json_dict()
            doc["meta"].pop("elapsed_s", None)
            _emit(doc)

    except argparse.ArgumentTypeError as e:
        parser.error(str(e))  # exits 2 with usage
    except MobisegError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def main():  # console entry point
    sys.exit(run())


if __name__ == "__main__":
    main()
