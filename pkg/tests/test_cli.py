import json
from pathlib import Path

import numpy as np
import pytest

from wildface import imageio
from wildface.cli import main
from wildface.imaging import ImageBuffer
from wildface.manifest import dump_manifest, load_manifest

from conftest import pipeline_fixture, smooth_image


def write_annotated_fixture(tmp_path: Path, n_identities=5, per_identity=4):
    manifest, load = pipeline_fixture(n_identities, per_identity)
    for rec in manifest.records:
        target = tmp_path / rec.path
        target.parent.mkdir(parents=True, exist_ok=True)
        imageio.write_image(load(rec.path), target)
    man_path = tmp_path / "manifest.jsonl"
    man_path.write_text(dump_manifest(manifest), encoding="utf-8")
    return man_path, manifest


def write_dedup_fixture(tmp_path: Path):
    from test_dedup import cluster_images

    lines = ['{"schema_version": 1}']
    for i in range(2):
        identity = f"animal{i}"
        for j, (name, img) in enumerate(cluster_images(40 + i).items()):
            rel = f"{identity}/{name}.png"
            target = tmp_path / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            imageio.write_image(img, target)
            lines.append(
                json.dumps(
                    {
                        "path": rel,
                        "identity": identity,
                        "source": "video_frame",
                        "video_id": f"v{i}",
                        "frame_index": j,
                    }
                )
            )
    man_path = tmp_path / "manifest.jsonl"
    man_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return man_path


class TestIngest:
    def test_stride_subsampling(self, tmp_path, capsys):
        frames = tmp_path / "frames"
        frames.mkdir()
        for i in range(25):
            imageio.write_image(smooth_image(16, 16, seed=i), frames / f"f{i:03d}.png")
        out = tmp_path / "man.jsonl"
        rc = main([
            "ingest", "--frames", str(frames), "--identity", "a",
            "--video-id", "v1", "--stride", "10", "--out", str(out),
        ])
        assert rc == 0
        manifest = load_manifest(out)
        assert [r.frame_index for r in manifest.records] == [0, 10, 20]

    def test_missing_dir_is_data_error(self, tmp_path):
        rc = main([
            "ingest", "--frames", str(tmp_path / "nope"), "--identity", "a",
            "--video-id", "v", "--out", str(tmp_path / "m.jsonl"),
        ])
        assert rc == 2


class TestDedupCli:
    def test_report_written_with_threshold_echo(self, tmp_path):
        man = write_dedup_fixture(tmp_path)
        out = tmp_path / "report.jsonl"
        rc = main([
            "--seed", "3", "dedup", "--manifest", str(man),
            "--threshold", "0.6", "--out", str(out),
        ])
        assert rc == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert lines[0]["kind"] == "params"
        assert lines[0]["threshold"] == 0.6
        per_id = [l for l in lines if l["kind"] == "individual"]
        assert len(per_id) == 2
        for row in per_id:
            assert row["retained_count"] == 3
        totals = lines[-1]
        assert totals["kind"] == "totals"
        assert totals["retained"] == 6 and totals["discarded"] == 4

    def test_byte_identical_reruns(self, tmp_path):
        man = write_dedup_fixture(tmp_path)
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        argv = ["--seed", "9", "dedup", "--manifest", str(man), "--threshold", "0.5"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_source_filter_excludes_photos_by_default(self, tmp_path):
        man = write_dedup_fixture(tmp_path)
        # add a photo record; default --sources video_frame must ignore it
        extra = {"path": "photo.png", "identity": "animal0", "source": "photo"}
        imageio.write_image(smooth_image(32, 32, seed=0), tmp_path / "photo.png")
        man.write_text(man.read_text() + json.dumps(extra) + "\n", encoding="utf-8")
        out = tmp_path / "r.jsonl"
        assert main(["dedup", "--manifest", str(man), "--out", str(out)]) == 0
        text = out.read_text()
        assert "photo.png" not in text


class TestSplitCli:
    def test_split_file_structure_and_determinism(self, tmp_path):
        man, manifest = write_annotated_fixture(tmp_path, n_identities=6, per_identity=4)
        a = tmp_path / "split_a.jsonl"
        b = tmp_path / "split_b.jsonl"
        argv = [
            "--seed", "4", "split", "--manifest", str(man),
            "--train-identities", "4", "--test-identities", "2",
        ]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        rows = [json.loads(l) for l in a.read_text().splitlines()]
        params = rows[0]
        assert len(params["train_identities"]) == 4
        assert len(params["test_identities"]) == 2
        roles = {r["role"] for r in rows[1:]}
        assert roles == {"train", "gallery", "probe"}


class TestAlignCli:
    def test_writes_aligned_images_and_sidecar(self, tmp_path):
        man, manifest = write_annotated_fixture(tmp_path, n_identities=2, per_identity=2)
        out_dir = tmp_path / "aligned"
        rc = main([
            "align", "--manifest", str(man),
            "--params", "a=1.3,b=1.7,c=1.2", "--out-dir", str(out_dir),
        ])
        assert rc == 0
        sidecar = [json.loads(l) for l in (out_dir / "alignment.jsonl").read_text().splitlines()]
        assert len(sidecar) == 4
        for row in sidecar:
            img = imageio.read_image(out_dir / row["aligned_path"])
            assert (img.width, img.height) == (224, 224)
            t = np.array(row["transform"])
            assert t.shape == (2, 3)


class TestEnrollIdentify:
    def test_end_to_end_identification(self, tmp_path):
        man, manifest = write_annotated_fixture(tmp_path, n_identities=3, per_identity=3)
        gal = tmp_path / "g.rpgl"
        assert main(["enroll", "--manifest", str(man), "--gallery", str(gal)]) == 0
        assert gal.exists()

        out = tmp_path / "matches.jsonl"
        rc = main([
            "identify", "--manifest", str(man), "--gallery", str(gal), "--out", str(out),
        ])
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 9
        by_path = {r.path: r.identity for r in manifest.records}
        for row in rows:
            assert row["decision"] == "identified"
            assert row["identity"] == by_path[row["path"]]

    def test_threshold_rejection_and_trace(self, tmp_path):
        man, manifest = write_annotated_fixture(tmp_path, n_identities=2, per_identity=2)
        gal = tmp_path / "g.rpgl"
        main(["enroll", "--manifest", str(man), "--gallery", str(gal)])
        rec = manifest.records[0]
        out = tmp_path / "one.jsonl"
        rc = main([
            "--trace", "identify", "--manifest", str(man), "--gallery", str(gal),
            "--image", str(tmp_path / rec.path), "--ref", rec.path,
            "--threshold", "1.01", "--out", str(out),
        ])
        assert rc == 0
        row = json.loads(out.read_text())
        assert row["decision"] == "unknown"
        stages = [t["stage"] for t in row["trace"]]
        assert stages[0] == "detect" and stages[-1] == "identify"

    def test_no_face_exit_code(self, tmp_path):
        man, manifest = write_annotated_fixture(tmp_path, n_identities=2, per_identity=2)
        gal = tmp_path / "g.rpgl"
        main(["enroll", "--manifest", str(man), "--gallery", str(gal)])
        bare = tmp_path / "bare.png"
        imageio.write_image(smooth_image(64, 64, seed=1), bare)
        man.write_text(
            man.read_text() + json.dumps({"path": "bare.png", "identity": "x", "source": "photo"}) + "\n",
            encoding="utf-8",
        )
        rc = main([
            "identify", "--manifest", str(man), "--gallery", str(gal),
            "--image", str(bare), "--ref", "bare.png",
        ])
        assert rc == 4

    def test_unknown_provider_and_external_stub(self, tmp_path):
        man, _ = write_annotated_fixture(tmp_path, n_identities=2, per_identity=2)
        gal = tmp_path / "g.rpgl"
        rc = main(["--provider", "external:onnx", "enroll", "--manifest", str(man), "--gallery", str(gal)])
        assert rc == 3
        rc = main(["--provider", "banana", "enroll", "--manifest", str(man), "--gallery", str(gal)])
        assert rc == 2

    def test_bad_manifest_exit_code(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n", encoding="utf-8")
        rc = main(["enroll", "--manifest", str(bad), "--gallery", str(tmp_path / "g.rpgl")])
        assert rc == 2


class TestEvaluateCli:
    @pytest.fixture
    def world(self, tmp_path):
        man, manifest = write_annotated_fixture(tmp_path, n_identities=6, per_identity=4)
        split = tmp_path / "split.jsonl"
        assert main([
            "--seed", "2", "split", "--manifest", str(man),
            "--train-identities", "4", "--test-identities", "2", "--out", str(split),
        ]) == 0
        return tmp_path, man, split

    def test_cmc_is_perfect_on_mock_embeddings(self, world):
        tmp_path, man, split = world
        out = tmp_path / "cmc.jsonl"
        rc = main(["evaluate", "cmc", "--manifest", str(man), "--split", str(split), "--out", str(out)])
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        curve = [r for r in rows if "k" in r]
        assert curve[0]["rate"] == 1.0
        assert curve[-1]["rate"] == 1.0

    def test_roc_on_test_population(self, world):
        tmp_path, man, split = world
        out = tmp_path / "roc.jsonl"
        rc = main([
            "--seed", "6", "evaluate", "roc", "--manifest", str(man),
            "--population", "test", "--split", str(split),
            "--n-genuine", "8", "--n-imposter", "8", "--out", str(out),
        ])
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert rows[0]["auc"] == 1.0  # identity-keyed embeddings separate perfectly
        assert rows[0]["n_genuine"] == 8
        # determinism
        out2 = tmp_path / "roc2.jsonl"
        main([
            "--seed", "6", "evaluate", "roc", "--manifest", str(man),
            "--population", "test", "--split", str(split),
            "--n-genuine", "8", "--n-imposter", "8", "--out", str(out2),
        ])
        assert out.read_bytes() == out2.read_bytes()

    def test_roc_requires_population_flag(self, world):
        tmp_path, man, split = world
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "roc", "--manifest", str(man), "--out", str(tmp_path / "r.jsonl")])
        assert exc.value.code == 2

    def test_ranks_table(self, world):
        tmp_path, man, split = world
        out = tmp_path / "ranks.jsonl"
        rc = main([
            "evaluate", "ranks", "--manifest", str(man), "--split", str(split),
            "--folds", "2", "--out", str(out),
        ])
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        mean = [r for r in rows if r["fold"] == "mean"][0]
        assert mean["rank1"] == 1.0

    def test_landmark_error_report(self, world, capsys):
        tmp_path, man, split = world
        out = tmp_path / "lm.jsonl"
        rc = main(["evaluate", "landmarks", "--manifest", str(man), "--out", str(out)])
        assert rc == 0
        row = json.loads(out.read_text())
        assert row["average"] <= 0.5
        table = capsys.readouterr().out
        assert "Left eye center" in table and "Average error" in table
