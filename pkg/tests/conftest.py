import numpy as np
import pytest

from mobiseg.data import CbgRecord, CityDataset, GroupSchema, MobilityGraph


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                lines.append((nodeid.split("::")[-1], outcome == "passed"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, ok in sorted(set(lines)):
            terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")


def write_city_files(tmp_path, flows_rows, demo_rows, poi_rows, demo_header, poi_header):
    """Write the three CSV inputs and return their paths."""
    flows = tmp_path / "flows.csv"
    demo = tmp_path / "demographics.csv"
    poi = tmp_path / "poi.csv"
    flows.write_text("origin,destination,weight\n" + "".join(r + "\n" for r in flows_rows))
    demo.write_text(demo_header + "\n" + "".join(r + "\n" for r in demo_rows))
    poi.write_text(poi_header + "\n" + "".join(r + "\n" for r in poi_rows))
    return flows, demo, poi


def tiny_dataset(thetas, weights, populations=None, lats=None, lons=None,
                 poi=None, attribute="income", labels=None):
    """Build a small in-memory CityDataset directly from arrays.

    thetas: (n, g) group counts (any non-negative scale).
    weights: list of (origin_idx, dest_idx, w).
    """
    thetas = np.asarray(thetas, dtype=float)
    n, g = thetas.shape
    labels = labels or [f"g{k}" for k in range(g)]
    populations = populations if populations is not None else [1000.0] * n
    lats = lats if lats is not None else [0.01 * i for i in range(n)]
    lons = lons if lons is not None else [0.0] * n
    poi_types = ("food", "shopping")
    poi = poi if poi is not None else np.ones((n, len(poi_types)))
    ids = [f"c{i:03d}" for i in range(n)]
    cbgs = [
        CbgRecord(
            id=ids[i], population=float(populations[i]), lat=float(lats[i]), lon=float(lons[i]),
            group_counts={attribute: thetas[i]}, poi_density=np.asarray(poi[i], dtype=float),
        )
        for i in range(n)
    ]
    graph = MobilityGraph([(ids[o], ids[d], w) for o, d, w in weights])
    schema = {attribute: GroupSchema(attribute, tuple(labels))}
    return CityDataset(cbgs, graph, schema, poi_types)


@pytest.fixture
def two_cbg_files(tmp_path):
    return write_city_files(
        tmp_path,
        flows_rows=["a,b,5.0"],
        demo_rows=["a,100,0.0,0.0,30,70", "b,200,0.0,0.1,50,50"],
        poi_rows=["a,1.0,2.0", "b,0.5,0.0"],
        demo_header="cbg_id,population,lat,lon,income.low,income.high",
        poi_header="cbg_id,food,shopping",
    )
