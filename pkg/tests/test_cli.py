import numpy as np
import pytest

from grace import dataset as dataset_io
from grace.cli import main
from grace.ply import read_ply_vertex_count
from grace.synthetic import GeneratorConfig, generate_dataset
from grace.training import ExperimentConfig, OptimizerConfig
from tests.conftest import tiny_model_config


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small dataset + trained checkpoint shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    cfg_gen = GeneratorConfig(n_points=96, image_size=(32, 32), num_parts=8)
    generate_dataset(data, num=4, seed=5, cfg=cfg_gen, test_fraction=0.25)
    cfg = ExperimentConfig(
        data_dir=str(data),
        out_dir=str(root / "run"),
        batch_size=2,
        epochs=10 ** 6,
        max_steps=6,
        seed=0,
        deterministic=True,
        model=tiny_model_config(),
        optimizer=OptimizerConfig(lr=1e-3),
    )
    config_path = root / "config.yaml"
    cfg.to_yaml(config_path)
    assert main(["train", "--config", str(config_path)]) == 0
    checkpoint = root / "run" / "checkpoint_final.grck"
    assert checkpoint.exists()
    return {"root": root, "data": data, "config": config_path, "checkpoint": checkpoint}


def test_generate_deterministic_bytes(tmp_path):
    args = ["generate", "--num", "3", "--seed", "7", "--parts", "6",
            "--image-size", "32x32", "--points", "96"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_generate_rejects_too_few_points(tmp_path):
    code = main(["generate", "--out", str(tmp_path / "x"), "--num", "2",
                 "--points", "32"])
    assert code == 2


def test_generate_manifest_lists_all_samples(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "d"), "--num", "5",
                 "--points", "96", "--image-size", "32x32", "--parts", "4"]) == 0
    manifest = dataset_io.read_manifest(tmp_path / "d")
    assert len(manifest["samples"]) == 5


def test_missing_subcommand_usage_error():
    assert main([]) == 2


def test_eval_missing_dataset_path(workspace, tmp_path, monkeypatch):
    monkeypatch.delenv("GRACE_DATA_DIR", raising=False)
    code = main(["eval", "--data", str(tmp_path / "nope"),
                 "--checkpoint", str(workspace["checkpoint"])])
    assert code == 2


def test_eval_writes_reports_and_legacy_column(workspace, tmp_path):
    out = tmp_path / "report"
    code = main(["eval", "--data", str(workspace["data"]),
                 "--checkpoint", str(workspace["checkpoint"]),
                 "--split", "train", "--deterministic",
                 "--legacy-geo-err", "--out", str(out)])
    assert code == 0
    csv_text = (out / "report.csv").read_text()
    assert csv_text.splitlines()[0].endswith("geo_err_cm")
    assert (out / "report.txt").exists()


def test_eval_data_dir_from_environment(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("GRACE_DATA_DIR", str(workspace["data"]))
    code = main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                 "--split", "train", "--deterministic"])
    assert code == 0


def test_predict_writes_probs_and_ply(workspace, tmp_path):
    sample_dir = workspace["data"] / "sample_00000"
    out = tmp_path / "pred"
    code = main(["predict", "--image", str(sample_dir / "image.png"),
                 "--points", str(sample_dir / "points.bin"),
                 "--checkpoint", str(workspace["checkpoint"]),
                 "--out", str(out)])
    assert code == 0
    probs = np.frombuffer((out / "contact.bin").read_bytes(), dtype="<f4")
    n = len(dataset_io.read_points(sample_dir / "points.bin"))
    assert len(probs) == n
    assert read_ply_vertex_count(out / "contact.ply") == n


def test_predict_arbitrary_cloud_size(workspace, tmp_path, rng):
    # a cloud that is not the training size still predicts, one prob per point
    pts = rng.normal(size=(128, 3)).astype(np.float32)
    points_path = tmp_path / "cloud.bin"
    dataset_io.write_points(points_path, pts)
    sample_dir = workspace["data"] / "sample_00000"
    out = tmp_path / "pred128"
    code = main(["predict", "--image", str(sample_dir / "image.png"),
                 "--points", str(points_path),
                 "--checkpoint", str(workspace["checkpoint"]),
                 "--out", str(out)])
    assert code == 0
    probs = np.frombuffer((out / "contact.bin").read_bytes(), dtype="<f4")
    assert len(probs) == 128


def test_predict_shuffled_cloud_matches_unshuffled(workspace, tmp_path, rng):
    sample_dir = workspace["data"] / "sample_00001"
    pts = dataset_io.read_points(sample_dir / "points.bin")
    perm = rng.permutation(len(pts))
    shuffled_path = tmp_path / "shuffled.bin"
    dataset_io.write_points(shuffled_path, pts[perm])

    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    base = ["predict", "--image", str(sample_dir / "image.png"),
            "--checkpoint", str(workspace["checkpoint"])]
    assert main(base + ["--points", str(sample_dir / "points.bin"), "--out", str(out_a)]) == 0
    assert main(base + ["--points", str(shuffled_path), "--out", str(out_b)]) == 0
    probs_a = np.frombuffer((out_a / "contact.bin").read_bytes(), dtype="<f4")
    probs_b = np.frombuffer((out_b / "contact.bin").read_bytes(), dtype="<f4")
    assert np.abs(probs_b - probs_a[perm]).max() < 1e-4


def test_predict_missing_input_is_usage_error(workspace, tmp_path):
    code = main(["predict", "--image", str(tmp_path / "missing.png"),
                 "--points", str(tmp_path / "missing.bin"),
                 "--checkpoint", str(workspace["checkpoint"])])
    assert code == 2


def test_predict_corrupt_checkpoint_is_runtime_error(workspace, tmp_path):
    bad = tmp_path / "bad.grck"
    bad.write_bytes(b"GRCKgarbage")
    sample_dir = workspace["data"] / "sample_00000"
    code = main(["predict", "--image", str(sample_dir / "image.png"),
                 "--points", str(sample_dir / "points.bin"),
                 "--checkpoint", str(bad), "--out", str(tmp_path / "o")])
    assert code == 1


def test_export_contact_roundtrip(workspace, tmp_path, rng):
    pts = rng.normal(size=(64, 3)).astype(np.float32)
    points_path = tmp_path / "pts.bin"
    dataset_io.write_points(points_path, pts)
    probs_path = tmp_path / "probs.bin"
    probs_path.write_bytes(rng.uniform(0, 1, size=64).astype("<f4").tobytes())
    ply_path = tmp_path / "out.ply"
    assert main(["export-contact", "--points", str(points_path),
                 "--probs", str(probs_path), "--out", str(ply_path)]) == 0
    assert read_ply_vertex_count(ply_path) == 64


def test_export_contact_length_mismatch(workspace, tmp_path, rng):
    pts = rng.normal(size=(64, 3)).astype(np.float32)
    points_path = tmp_path / "pts.bin"
    dataset_io.write_points(points_path, pts)
    probs_path = tmp_path / "probs.bin"
    probs_path.write_bytes(rng.uniform(0, 1, size=32).astype("<f4").tobytes())
    code = main(["export-contact", "--points", str(points_path),
                 "--probs", str(probs_path), "--out", str(tmp_path / "o.ply")])
    assert code == 2
