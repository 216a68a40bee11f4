"""Walk the HTTP service end to end with an in-process test client.

The same app serves the browser UI; run it standalone with
`python -m mobiseg.service` (or `uvicorn 'mobiseg.service:create_app()'`).
"""

import tempfile
import time

from fastapi.testclient import TestClient

from mobiseg.config import ServiceConfig
from mobiseg.service import create_app
from mobiseg.synth import SynthConfig, generate_city, write_city_csv

with tempfile.TemporaryDirectory() as tmp:
    dataset, _ = generate_city(SynthConfig(seed=9, n_cbgs=49, extent_km=10.0,
                                           mobility_rate=1.0))
    write_city_csv(dataset, f"{tmp}/city")
    client = TestClient(create_app(ServiceConfig(data_dir=f"{tmp}/svc", k_bridge=8,
                                                 whatif_shap_samples=8)))

    files = {name: (f"{name}.csv", open(f"{tmp}/city/{name}.csv", "rb"), "text/csv")
             for name in ("flows", "demographics", "poi")}
    summary = client.post("/datasets", files=files).json()
    print(f"POST /datasets -> id {summary['id']}, {summary['n_cbgs']} CBGs")

    part = client.post("/communities/detect",
                       json={"attribute": "income", "w_min": 1.0}).json()
    print(f"POST /communities/detect -> {len(part['communities'])} communities")

    matrix = client.get("/flow-matrix", params={"aggregation": "sum"}).json()
    print(f"GET /flow-matrix -> {len(matrix['labels'])}x{len(matrix['labels'])} cells")

    ranking = client.get("/cbgs/ranking", params={"community": 0}).json()
    target = ranking["rows"][0]["cbg"]
    print(f"GET /cbgs/ranking -> top candidate {target}")

    job = client.post("/model/train", json={"attribute": "income", "variant": "dg+s",
                                            "epochs": 2, "runs": 1, "k_dest": 10}).json()
    while client.get(f"/model/jobs/{job['job']}").json()["status"] == "running":
        time.sleep(0.2)
    means = client.get("/model/metrics").json()["means"]
    print(f"POST /model/train -> mean CPC {means[0]['cpc']:.3f}")

    scenario = client.post("/whatif", json={"target": target,
                                            "deltas": {"food": 4.0}}).json()
    print(f"POST /whatif -> SI {scenario['si_before']:.4f} -> {scenario['si_after']:.4f} "
          f"({scenario['delta_si_pct']:+.2f}%)")

    saved = client.post("/strategies", json={"target": target, "label": "more food",
                                             "deltas": {"food": 4.0}}).json()
    print(f"POST /strategies -> saved {saved['strategy']['id']}")
    print(f"GET /strategies -> {len(client.get('/strategies').json()['strategies'])} stored")
