import json

import pytest

from costplan.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def problem_file(tmp_path, capsys):
    path = tmp_path / "problem.json"
    code = main(["gen", "--kind", "problem", "--seed", "3", "--out", str(path)])
    capsys.readouterr()
    assert code == 0
    return path


@pytest.fixture
def records_file(tmp_path, capsys):
    path = tmp_path / "records.csv"
    code = main(["gen", "--kind", "records", "--count", "300", "--seed", "1", "--out", str(path)])
    capsys.readouterr()
    assert code == 0
    return path


class TestValidate:
    def test_ok(self, capsys, problem_file):
        code, out, _ = run(capsys, "validate", "--in", str(problem_file))
        assert code == 0
        assert out == "ok\n"

    def test_invalid_problem_exits_1(self, capsys, tmp_path):
        doc = {
            "format_version": 1,
            "workflows": [{"id": "w", "earliest_start": 5.0, "deadline": 1.0}],
            "devices": [{"id": "d", "base_rate": 1.0, "overflow_rate": 1.0, "prepurchased_hours": 0.0}],
            "configs": [{"device_id": "d", "config_id": "k", "device_count": 1}],
            "durations": [{"workflow_id": "w", "device_id": "d", "config_id": "k", "hours": 1.0}],
        }
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        code, _, err = run(capsys, "validate", "--in", str(p))
        assert code == 1
        assert "window_inverted" in err

    def test_malformed_json_exits_2(self, capsys, tmp_path):
        p = tmp_path / "garbage.json"
        p.write_text("{oops")
        code, _, err = run(capsys, "validate", "--in", str(p))
        assert code == 2
        assert "error:" in err

    def test_missing_file_exits_2(self, capsys):
        code, _, _ = run(capsys, "validate", "--in", "/nonexistent.json")
        assert code == 2

    def test_unknown_subcommand_exits_2(self, capsys):
        assert run(capsys, "frobnicate")[0] == 2


class TestScheduleAndOracle:
    def test_schedule_matches_oracle_cost(self, capsys, problem_file, tmp_path):
        sched_path = tmp_path / "schedule.json"
        code, _, err = run(capsys, "schedule", "--in", str(problem_file), "--out", str(sched_path))
        assert code == 0
        assert "status=optimal" in err
        code, out, _ = run(capsys, "oracle", "--in", str(problem_file))
        assert code == 0
        oracle = json.loads(out)
        sched = json.loads(sched_path.read_text())
        assert sched["cost"]["total"] == pytest.approx(oracle["total"], abs=1e-6)
        got = {a["workflow_id"]: (a["device_id"], a["config_id"]) for a in sched["assignment"]}
        want = {a["workflow_id"]: (a["device_id"], a["config_id"]) for a in oracle["assignment"]}
        assert got == want

    def test_schedule_output_deterministic(self, capsys, problem_file, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(capsys, "schedule", "--in", str(problem_file), "--out", str(a))[0] == 0
        assert run(capsys, "schedule", "--in", str(problem_file), "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_infeasible_names_culprit(self, capsys, tmp_path):
        doc = {
            "format_version": 1,
            "workflows": [
                {"id": "early", "earliest_start": 0.0, "deadline": 10.0},
                {"id": "late", "earliest_start": 0.0, "deadline": 1.0},
            ],
            "devices": [{"id": "d", "base_rate": 1.0, "overflow_rate": 1.0, "prepurchased_hours": 0.0}],
            "configs": [{"device_id": "d", "config_id": "k", "device_count": 1}],
            "durations": [
                {"workflow_id": "early", "device_id": "d", "config_id": "k", "hours": 1.0},
                {"workflow_id": "late", "device_id": "d", "config_id": "k", "hours": 2.0},
            ],
        }
        p = tmp_path / "infeasible.json"
        p.write_text(json.dumps(doc))
        code, _, err = run(capsys, "schedule", "--in", str(p))
        assert code == 1
        assert "late" in err
        assert "early" not in err.replace("no feasible schedule exists", "")

    def test_skeleton_without_model_exits_2(self, capsys, tmp_path):
        doc = {
            "format_version": 1,
            "workflows": [{"id": "w", "earliest_start": 0.0, "deadline": 10.0}],
            "devices": [{"id": "d", "base_rate": 1.0, "overflow_rate": 1.0, "prepurchased_hours": 0.0}],
            "configs": [{"device_id": "d", "config_id": "k", "device_count": 1}],
        }
        p = tmp_path / "skeleton.json"
        p.write_text(json.dumps(doc))
        code, _, err = run(capsys, "schedule", "--in", str(p), "--no-model")
        assert code == 2
        assert "durations" in err


class TestTrainTunePredict:
    def test_train_emits_model_with_metrics(self, capsys, records_file, tmp_path):
        model_path = tmp_path / "model.json"
        code, _, _ = run(
            capsys, "train", "--in", str(records_file), "--family", "ridge",
            "--alpha", "1.0", "--out", str(model_path),
        )
        assert code == 0
        doc = json.loads(model_path.read_text())
        assert doc["family"] == "ridge"
        assert doc["training_metrics"]["n"] == 300
        assert doc["training_metrics"]["mae"] > 0

    def test_tune_reports_best_alpha(self, capsys, records_file):
        code, out, _ = run(capsys, "tune", "--in", str(records_file), "--family", "ridge")
        assert code == 0
        doc = json.loads(out)
        scanned = {a for a, _ in doc["cv_mae_by_alpha"]}
        assert doc["best_alpha"] in scanned
        best_mae = dict(doc["cv_mae_by_alpha"])[doc["best_alpha"]]
        assert all(best_mae <= mae + 1e-12 for _, mae in doc["cv_mae_by_alpha"])

    def test_predict_then_schedule(self, capsys, records_file, problem_file, tmp_path):
        model_path = tmp_path / "model.json"
        assert run(capsys, "train", "--in", str(records_file), "--out", str(model_path))[0] == 0

        # strip the durations so prediction must fill them
        skeleton = json.loads(problem_file.read_text())
        del skeleton["durations"]
        # widen windows: predicted durations are much longer than generated ones
        for w in skeleton["workflows"]:
            w["deadline"] = w["earliest_start"] + 1000.0
        skel_path = tmp_path / "skeleton.json"
        skel_path.write_text(json.dumps(skeleton))

        filled_path = tmp_path / "filled.json"
        code, _, _ = run(
            capsys, "predict", "--in", str(skel_path), "--model", str(model_path),
            "--out", str(filled_path),
        )
        assert code == 0
        filled = json.loads(filled_path.read_text())
        assert filled["durations"]
        assert all(e["hours"] > 0 for e in filled["durations"])

        code, _, err = run(capsys, "schedule", "--in", str(filled_path))
        assert code == 0
        assert "status=optimal" in err


class TestReport:
    def test_report_pipeline(self, capsys, problem_file, tmp_path):
        problem = json.loads(problem_file.read_text())
        wids = [w["id"] for w in problem["workflows"]]
        first_choice = {}
        for e in problem["durations"]:
            key = e["workflow_id"]
            pair = (e["device_id"], e["config_id"])
            if key not in first_choice or pair < first_choice[key]:
                first_choice[key] = pair
        runlog = {
            "format_version": 1,
            "problem": problem,
            "final_assignment": [
                {"workflow_id": w, "device_id": d, "config_id": k}
                for w, (d, k) in first_choice.items()
            ],
            "outcomes": [{"workflow_id": w, "status": "success"} for w in wids],
            "elapsed_s": 100.0,
        }
        p = tmp_path / "runlog.json"
        p.write_text(json.dumps(runlog))
        code, out, _ = run(capsys, "report", "--in", str(p))
        assert code == 0
        doc = json.loads(out)
        assert doc["reliability"] == 1.0
        assert doc["jobs_completed"] == len(wids)
        # final assignment equals the baseline, so no cost change
        assert doc["cost_change_rate"] == pytest.approx(0.0)

    def test_gen_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(capsys, "gen", "--seed", "9", "--out", str(a))[0] == 0
        assert run(capsys, "gen", "--seed", "9", "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()
