import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pandemic_fhoc.cli import eps_grid, main
from pandemic_fhoc.contact import N_NPI, NPI_CODES, U_MAX
from synth import make_region, region_to_oxcgrt_rows


def write_oxcgrt_csv(path: Path, regions, corrupt_row=False):
    headers = ["CountryName", "RegionName", "Date", "ConfirmedCases"] + [
        f"{code}_Policy" for code in NPI_CODES
    ]
    rows = []
    for region in regions:
        rows.extend(region_to_oxcgrt_rows(region))
    if corrupt_row:
        bad = dict(rows[5])
        bad["Date"] = "not-a-date"
        rows.insert(5, bad)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=headers)
        writer.writeheader()
        writer.writerows(rows)


@pytest.fixture(scope="module")
def synth_setup(tmp_path_factory):
    """Three ingested synthetic regions plus one trained model."""
    root = tmp_path_factory.mktemp("cli")
    regions = [make_region(seed=s) for s in range(3)]
    csv_path = root / "oxcgrt.csv"
    write_oxcgrt_csv(csv_path, regions)
    pop_path = root / "population.csv"
    pop_path.write_text("".join(f"{r.region_id}, {int(r.population)}\n" for r in regions))
    data_dir = root / "data"
    rc = main(["ingest", "--oxcgrt", str(csv_path), "--population", str(pop_path), "--out", str(data_dir)])
    assert rc == 0
    models_dir = root / "models"
    rc = main(["train", "--data", str(data_dir), "--out", str(models_dir)])
    assert rc == 0
    return root, regions, data_dir, models_dir


class TestIngestCommand:
    def test_fixture_round(self, tmp_path):
        regions = [make_region(seed=9, n_days=200)]
        csv_path = tmp_path / "x.csv"
        write_oxcgrt_csv(csv_path, regions)
        out = tmp_path / "out"
        rc = main(["ingest", "--oxcgrt", str(csv_path), "--out", str(out)])
        assert rc == 0
        index = json.loads((out / "index.json").read_text())
        assert index["regions"] == ["Synthia09"]
        assert (out / "Synthia09.json").exists()
        assert (out / "manifest.json").exists()

    def test_missing_column_exit_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("CountryName,Date\nX,20200301\n")
        assert main(["ingest", "--oxcgrt", str(bad), "--out", str(tmp_path / "o")]) == 2

    def test_corrupt_row_counted(self, tmp_path):
        regions = [make_region(seed=10, n_days=150)]
        csv_path = tmp_path / "x.csv"
        write_oxcgrt_csv(csv_path, regions, corrupt_row=True)
        out = tmp_path / "out"
        rc = main(["ingest", "--oxcgrt", str(csv_path), "--out", str(out)])
        assert rc == 0
        index = json.loads((out / "index.json").read_text())
        assert index["stats"]["skipped"]["unparseable_date"] == 1


class TestTrainCommand:
    def test_three_regions_three_models(self, synth_setup):
        _, regions, _, models_dir = synth_setup
        models = sorted(models_dir.glob("*.model.json"))
        assert len(models) == 3
        summary = (models_dir / "summary.csv").read_text().splitlines()
        assert len(summary) == 4

    def test_determinism(self, synth_setup, tmp_path):
        root, regions, data_dir, models_dir = synth_setup
        out2 = tmp_path / "models2"
        rc = main(["train", "--data", str(data_dir), "--out", str(out2)])
        assert rc == 0
        for p in sorted(models_dir.glob("*.model.json")):
            q = out2 / p.name
            assert q.read_text() == p.read_text()

    def test_degenerate_region_flagged(self, tmp_path):
        region = make_region(seed=11)
        region.npis = np.tile(region.npis[0], (len(region.dates), 1))
        csv_path = tmp_path / "x.csv"
        write_oxcgrt_csv(csv_path, [region])
        pop = tmp_path / "pop.csv"
        pop.write_text(f"{region.region_id}, {int(region.population)}\n")
        data_dir = tmp_path / "data"
        main(["ingest", "--oxcgrt", str(csv_path), "--population", str(pop), "--out", str(data_dir)])
        out = tmp_path / "models"
        rc = main(["train", "--data", str(data_dir), "--out", str(out)])
        assert rc == 0
        summary = (out / "summary.csv").read_text()
        lines = summary.strip().splitlines()
        assert lines[1].split(",")[4] == "1"  # degenerate flag

    def test_short_region_fails_partially(self, tmp_path):
        good, short = make_region(seed=12), make_region(seed=13, n_days=80)
        csv_path = tmp_path / "x.csv"
        write_oxcgrt_csv(csv_path, [good, short])
        pop = tmp_path / "pop.csv"
        pop.write_text(
            f"{good.region_id}, {int(good.population)}\n"
            f"{short.region_id}, {int(short.population)}\n"
        )
        data_dir = tmp_path / "data"
        main(["ingest", "--oxcgrt", str(csv_path), "--population", str(pop), "--out", str(data_dir)])
        out = tmp_path / "models"
        rc = main(["train", "--data", str(data_dir), "--out", str(out)])
        assert rc == 1  # partial: one region failed
        assert len(list(out.glob("*.model.json"))) == 1


class TestForecastCommand:
    def test_single_day(self, synth_setup, tmp_path):
        _, _, _, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        scen = tmp_path / "scen.json"
        scen.write_text('{"kind": "max"}')
        out = tmp_path / "fc.csv"
        rc = main(["forecast", "--model", str(model_path), "--npis", str(scen), "--days", "1", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3  # header + step 0 + step 1

    def test_missing_scenario_exit_2(self, synth_setup, tmp_path):
        _, _, _, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        rc = main(["forecast", "--model", str(model_path), "--npis", str(tmp_path / "missing.json"), "--days", "5", "--out", str(tmp_path / "o.csv")])
        assert rc == 2

    def test_bad_days_exit_2(self, synth_setup, tmp_path):
        _, _, _, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        scen = tmp_path / "scen.json"
        scen.write_text('{"kind": "min"}')
        rc = main(["forecast", "--model", str(model_path), "--npis", str(scen), "--days", "0", "--out", str(tmp_path / "o.csv")])
        assert rc == 2

    def test_truth_error_table(self, synth_setup, tmp_path):
        root, regions, data_dir, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        truth_path = sorted(p for p in data_dir.glob("*.json") if "index" not in p.name and "manifest" not in p.name)[0]
        scen = tmp_path / "scen.json"
        scen.write_text('{"kind": "fixed"}')
        out = tmp_path / "fc.csv"
        rc = main([
            "forecast", "--model", str(model_path), "--npis", str(scen),
            "--days", "10", "--out", str(out), "--truth", str(truth_path),
        ])
        assert rc == 0
        err_lines = (tmp_path / "fc.errors.csv").read_text().strip().splitlines()
        assert err_lines[0] == "lookahead_days,error_percent"
        assert len(err_lines) > 1


class TestPrescribeCommand:
    def test_eps_corners(self, synth_setup, tmp_path):
        _, _, _, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        out = tmp_path / "p0"
        rc = main(["prescribe", "--model", str(model_path), "--eps", "1.0", "--horizon", "20", "--out", str(out)])
        assert rc == 0
        rows = (out / "biobjective.csv").read_text().strip().splitlines()
        _, kind, eps, j0, j1, converged, dominated = rows[1].split(",")
        assert float(j1) == 0.0
        sched_rows = (out / "schedules.csv").read_text().strip().splitlines()[1:]
        opt_rows = [r for r in sched_rows if r.startswith("optimal")]
        assert opt_rows and all(r.split(",")[2:] == ["0"] * N_NPI for r in opt_rows)

    def test_grid_and_scenarios_counts(self, synth_setup, tmp_path):
        _, _, _, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        out = tmp_path / "p1"
        rc = main([
            "prescribe", "--model", str(model_path), "--eps-grid", "5",
            "--horizon", "15", "--random-scenarios", "4", "--seed", "3", "--out", str(out),
        ])
        assert rc == 0
        rows = (out / "biobjective.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 5 + 1 + 4  # header, eps grid, fixed, randoms
        chosen = json.loads((out / "chosen.json").read_text())
        assert chosen is not None

    def test_seed_determinism(self, synth_setup, tmp_path):
        _, _, _, models_dir = synth_setup
        model_path = sorted(models_dir.glob("*.model.json"))[0]
        outs = []
        for name in ("pa", "pb"):
            out = tmp_path / name
            main([
                "prescribe", "--model", str(model_path), "--eps-grid", "3",
                "--horizon", "10", "--random-scenarios", "2", "--seed", "7", "--out", str(out),
            ])
            outs.append((out / "biobjective.csv").read_text())
        assert outs[0] == outs[1]

    def test_missing_model_exit_2(self, tmp_path):
        rc = main(["prescribe", "--model", str(tmp_path / "nope.json"), "--eps", "0.5", "--horizon", "5", "--out", str(tmp_path / "o")])
        assert rc == 2


class TestEpsGrid:
    def test_grid_contains_corners(self):
        g = eps_grid(25)
        assert g[0] == 0.0
        assert g[-1] == 1.0
        assert len(g) == 25
        assert np.all((g >= 0) & (g <= 1))
