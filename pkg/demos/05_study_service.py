"""
Driving the study service over HTTP
====================================

Walk one participant through the full study: create a session, set
tolerances, rate one painting per story group, then assess each engine's
blinded recommendation set.  One engine is served twice as an attention
check; the export reveals engine identities and the attention deviation.
"""

import json
import os
import tempfile

from fastapi.testclient import TestClient

from mosaic.service import ServiceConfig, SessionStore, create_app

from _toy import toy_collection, toy_matrix

collection = toy_collection()
matrices = {"a": toy_matrix(collection)}

data_dir = tempfile.mkdtemp(prefix="mosaic-study-")
store = SessionStore(
    data_dir, collection, matrices,
    ServiceConfig(engines=("base-a", "pop-a", "fair-a", "mosaic-a"), r=9, seed=1),
)
client = TestClient(create_app(store))

session = client.post("/api/session", json={"age": 31, "gender": "f"}).json()
sid = session["session_id"]
print(f"session {sid[:8]}..., {session['n_sets']} sets to assess")

client.post(f"/api/session/{sid}/tolerances", json={"beta_raw": 4, "xi_raw": 5})
elicitation = client.get(f"/api/session/{sid}/elicitation").json()["items"]
print("rating one painting per story:", [item["id"] for item in elicitation])
client.post(f"/api/session/{sid}/ratings",
            json={"ratings": {item["id"]: 4 for item in elicitation}})

shown = []
while True:
    body = client.get(f"/api/session/{sid}/next").json()
    if body.get("done"):
        break
    items = [item["id"] for item in body["items"]]
    shown.append(items)
    print(f"set {body['index']}/{body['total']} (engine hidden): {items[:3]}...")
    client.post(f"/api/session/{sid}/feedback",
                json={"accuracy": 4, "diversity": 3, "novelty": 4, "serendipity": 3})

pairs = [(i, j) for i, a in enumerate(shown) for j, b in enumerate(shown) if i < j and a == b]
print(f"identical set pairs (the attention check guarantees at least one): "
      f"{[(i + 1, j + 1) for i, j in pairs]}")

os.environ["MOSAIC_ADMIN_TOKEN"] = "demo-token"
export = client.get("/api/export", headers={"X-Admin-Token": "demo-token"}).json()
row = export["sessions"][0]
print("export reveals the engine order:", row["engine_order"])
print("attention deviation:", row["attention_deviation"],
      "flagged:", row["attention_failed"])
print("data survives restarts in", data_dir)
