"""Regenerate the recorded service fixtures used by the contract tests.

Trains two synthetic regions, runs the real HTTP service in-process, and
captures the exact JSON bodies the UI consumes. Run from the repository
root with the Python package installed:

    python3 frontend/record_fixtures.py
"""

import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from fastapi.testclient import TestClient  # noqa: E402

from pandemic_fhoc.service import create_app  # noqa: E402
from pandemic_fhoc.training import TrainingHyper, train_region  # noqa: E402
from synth import make_region  # noqa: E402


def main() -> None:
    fixtures = Path(__file__).resolve().parent / "fixtures"
    fixtures.mkdir(exist_ok=True)
    models = Path(tempfile.mkdtemp())
    for seed in (50, 51):
        region = make_region(seed=seed)
        model = train_region(region, hyper=TrainingHyper(mu=1e-6))
        (models / f"{model.region_id}.model.json").write_text(model.to_json())

    client = TestClient(create_app(models))
    (fixtures / "regions.json").write_text(
        json.dumps(client.get("/regions").json(), indent=2)
    )

    sweep_req = {
        "region": "Synthia50",
        "eps_grid": 8,
        "horizon": 21,
        "random_scenarios": 4,
        "seed": 3,
    }
    sweep = client.post("/prescribe", json=sweep_req).json()
    (fixtures / "sweep.json").write_text(
        json.dumps({"request": sweep_req, "response": sweep}, indent=2)
    )

    schedules = {}
    for p in sweep["points"]:
        resp = client.get(f"/schedule/{p['id']}")
        if resp.status_code == 200:
            schedules[p["id"]] = resp.json()
    (fixtures / "schedules.json").write_text(json.dumps(schedules, indent=2))

    fc_req = {"region": "Synthia50", "scenario": {"kind": "max"}, "days": 21}
    (fixtures / "forecast.json").write_text(
        json.dumps({"request": fc_req, "response": client.post("/forecast", json=fc_req).json()}, indent=2)
    )
    print(f"fixtures written to {fixtures}")


if __name__ == "__main__":
    main()
