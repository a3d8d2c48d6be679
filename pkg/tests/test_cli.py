import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from hydroident.cli import main
from hydroident.identify import coeffs_to_dict, evaluate_candidate, make_ident_config
from hydroident.model import JointSpec, MechanismModel, ParamVector, model_to_dict
from hydroident.presets import THREE_LINK_REFERENCE, ellipsoid_link
from hydroident.trajectory import Calibration, Trajectory, load_trajectory, save_trajectory


def one_link_model():
    return MechanismModel(base_pose=(0.0, 0.0, 0.9),
                          links=(ellipsoid_link(),),
                          joints=(JointSpec(),),
                          initial_state=((0.35,), (0.0,)))


def one_link_coeffs():
    values = np.asarray(THREE_LINK_REFERENCE[:5], dtype=float)
    return ParamVector(values, np.zeros(5), np.full(5, 10.0))


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    doc = model_to_dict(one_link_model())
    doc["capture"] = {"duration": 0.8, "sample_rate": 30.0}
    (root / "model.json").write_text(json.dumps(doc, indent=2) + "\n")
    bare = model_to_dict(one_link_model())
    (root / "bare_model.json").write_text(json.dumps(bare, indent=2) + "\n")
    (root / "coeffs.json").write_text(
        json.dumps(coeffs_to_dict(one_link_coeffs()), indent=2) + "\n")
    (root / "absurd.json").write_text(json.dumps(
        {"schema_version": 1, "per_link_coeffs": [[1e9] * 5]}) + "\n")
    return root


def test_pipeline_synth_identify_evaluate(files, tmp_path):
    target = tmp_path / "target.csv"
    result = tmp_path / "result.json"
    history = tmp_path / "history.csv"
    score = tmp_path / "score.json"
    assert main(["synth", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--noise-std", "5e-4", "--seed", "1",
                 "--out", str(target)]) == 0
    assert main(["identify", "--model", str(files / "model.json"),
                 "--target", str(target), "--max-evals", "400",
                 "--seed", "1", "--out", str(result),
                 "--history", str(history)]) == 0
    doc = json.loads(result.read_text())
    assert doc["eval_count"] <= 400
    assert main(["evaluate", "--model", str(files / "model.json"),
                 "--coeffs", str(result), "--target", str(target),
                 "--out", str(score)]) == 0
    scored = json.loads(score.read_text())
    assert scored["normalized_error"] < 0.05
    assert scored["normalized_error"] == doc["normalized_error"]
    lines = history.read_text().splitlines()
    assert lines[0] == "generation,evals,best,median"
    assert len(lines) > 2


def test_simulate_writes_csv(files, tmp_path):
    out = tmp_path / "track.csv"
    assert main(["simulate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("t,P0x,P0y,P1x,P1y")
    # capture block supplies 0.8 s at 30 Hz
    assert len(lines) == 1 + 25


def test_synth_no_noise_equals_simulate(files, tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["simulate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"), "--out", str(a)]) == 0
    assert main(["synth", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_zero_duration_single_row(files, tmp_path):
    out = tmp_path / "still.csv"
    assert main(["simulate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--duration", "0", "--rate", "30", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].startswith("0,") or lines[1].startswith("0.0,")


def test_identify_is_reproducible(files, tmp_path):
    target = tmp_path / "target.csv"
    main(["synth", "--model", str(files / "model.json"),
          "--coeffs", str(files / "coeffs.json"), "--out", str(target)])
    docs, histories = [], []
    for tag in ("one", "two"):
        result = tmp_path / f"{tag}.json"
        history = tmp_path / f"{tag}.csv"
        assert main(["identify", "--model", str(files / "model.json"),
                     "--target", str(target), "--max-evals", "120",
                     "--out", str(result), "--history", str(history)]) == 0
        docs.append(json.loads(result.read_text()))
        histories.append(history.read_bytes())
    for doc in docs:
        doc.pop("wall_time_s")      # timing is the one non-deterministic field
    assert docs[0] == docs[1]
    assert histories[0] == histories[1]


def test_identify_accepts_pixel_target_with_calibration(files, tmp_path):
    world_csv = tmp_path / "world.csv"
    main(["synth", "--model", str(files / "model.json"),
          "--coeffs", str(files / "coeffs.json"), "--out", str(world_csv)])
    world = load_trajectory(world_csv)
    # power-of-two scale and zero origin make the pixel round trip exact
    calib = Calibration(meters_per_pixel=2.0 ** -10, origin_px=(0.0, 0.0))
    px_points = np.array([[calib.to_pixels(p) for p in frame]
                          for frame in world.points])
    save_trajectory(Trajectory(world.times, px_points, world.keypoint_labels),
                    tmp_path / "pixels.csv")
    calib_doc = {"meters_per_pixel": 2.0 ** -10, "origin_px": [0.0, 0.0],
                 "flip_y": True}
    (tmp_path / "calib.json").write_text(json.dumps(calib_doc))

    out_px = tmp_path / "from_pixels.json"
    out_world = tmp_path / "from_world.json"
    for target, calib_args, out in (
            (tmp_path / "pixels.csv", ["--calib", str(tmp_path / "calib.json")], out_px),
            (world_csv, [], out_world)):
        assert main(["identify", "--model", str(files / "model.json"),
                     "--target", str(target), "--max-evals", "0",
                     "--out", str(out)] + calib_args) == 0
    a = json.loads(out_px.read_text())
    b = json.loads(out_world.read_text())
    assert a["best_loss"] == b["best_loss"]
    assert a["best_x"] == b["best_x"]


def test_evaluate_score_fields(files, tmp_path):
    target = tmp_path / "target.csv"
    score = tmp_path / "score.json"
    main(["synth", "--model", str(files / "model.json"),
          "--coeffs", str(files / "coeffs.json"), "--out", str(target)])
    assert main(["evaluate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--target", str(target), "--out", str(score)]) == 0
    doc = json.loads(score.read_text())
    assert doc["schema_version"] == 1
    assert doc["trajectory_mse"] == 0.0
    assert doc["normalized_error"] == 0.0
    assert doc["per_keypoint_error"] == [0.0, 0.0, 0.0, 0.0]


def test_usage_errors_exit_1(files, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--model", str(files / "model.json")])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    # no --duration and no capture block in the model
    code = main(["simulate", "--model", str(files / "bare_model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 1
    assert "capture" in capsys.readouterr().err


def test_data_errors_exit_2(files, tmp_path, capsys):
    code = main(["evaluate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--target", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "score.json")])
    assert code == 2

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    code = main(["simulate", "--model", str(broken),
                 "--coeffs", str(files / "coeffs.json"),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2

    invalid = tmp_path / "invalid_model.json"
    doc = json.loads((files / "model.json").read_text())
    doc["links"][0]["mass"] = -1.0
    invalid.write_text(json.dumps(doc))
    code = main(["simulate", "--model", str(invalid),
                 "--coeffs", str(files / "coeffs.json"),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.count("hydroident: error:") >= 1


def test_unreachable_server_exits_2(files, tmp_path, capsys):
    code = main(["simulate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "coeffs.json"),
                 "--server", "http://127.0.0.1:9",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "unreachable" in capsys.readouterr().err


def test_numerical_errors_exit_3(files, tmp_path, capsys):
    code = main(["simulate", "--model", str(files / "model.json"),
                 "--coeffs", str(files / "absurd.json"),
                 "--out", str(tmp_path / "x.csv")])
    assert code == 3
    assert "hydroident: error:" in capsys.readouterr().err


def test_help_documents_flags_and_schemas(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    top = capsys.readouterr().out
    for sub in ("simulate", "identify", "evaluate", "synth"):
        assert sub in top

    expected = {
        "simulate": ["--model", "--coeffs", "--duration", "--rate", "--dt",
                     "--out", "--server", "model JSON", "trajectory CSV"],
        "identify": ["--target", "--calib", "--max-evals", "--sigma0",
                     "--seed", "--workers", "--history",
                     "--include-joint-params", "--loss-keypoints",
                     "result JSON", "history CSV", "calibration JSON"],
        "evaluate": ["--coeffs", "--target", "--out", "score JSON"],
        "synth": ["--noise-std", "--seed", "--out", "coeffs JSON"],
    }
    for sub, needles in expected.items():
        with pytest.raises(SystemExit) as exc:
            main([sub, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for needle in needles:
            assert needle in text, f"{sub} --help lacks {needle}"


def test_console_entry_point(files, tmp_path):
    exe = shutil.which("hydroident")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
