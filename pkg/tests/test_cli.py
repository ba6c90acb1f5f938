"""End-to-end CLI tests: pipeline wiring, exit codes, determinism."""

from __future__ import annotations

import json

import pytest

from filterlens.cli import main


def _run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """A synthetic dataset with vocabulary and inferred matrix on disk."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    assert _run(
        "synth", "--n-filters", 8, "--n-attributes", 8, "--n-images", 60,
        "--n-classes", 4, "--seed", 11, "--out", data,
    ) == 0
    vocab = root / "vocab.json"
    assert _run(
        "build-vocab", "--captions", data / "captions", "--out", vocab
    ) == 0
    pdf = root / "fa.ftns"
    assert _run(
        "compute-pdf", "--manifest", data / "manifest.json", "--vocab", vocab,
        "--out", pdf,
    ) == 0
    return {
        "root": root,
        "manifest": data / "manifest.json",
        "captions": data / "captions",
        "mapping": data / "keypoint_mapping.tsv",
        "planted": data / "planted.json",
        "vocab": vocab,
        "pdf": pdf,
    }


class TestPipelineCommands:
    def test_synth_wrote_expected_layout(self, pipeline):
        manifest = json.loads(pipeline["manifest"].read_text())
        assert manifest["n_filters"] == 8
        assert len(manifest["images"]) == 60
        assert pipeline["mapping"].exists()
        planted = json.loads(pipeline["planted"].read_text())
        assert len(planted) == 8

    def test_explain_single_image(self, pipeline, capsys):
        assert _run(
            "explain", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], "--image-id", "img00000",
        ) == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["explanations"]) == 1
        entry = payload["explanations"][0]
        assert entry["image_id"] == "img00000"
        assert entry["sentence"].startswith("This is a ")

    def test_explain_unknown_image_exits_1_and_names_id(self, pipeline, caplog):
        code = _run(
            "explain", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], "--image-id", "img99999",
        )
        assert code == 1
        assert "img99999" in caplog.text

    def test_ground_writes_heatmap_files(self, pipeline, capsys):
        planted = json.loads(pipeline["planted"].read_text())
        out = pipeline["root"] / "heat"
        assert _run(
            "ground", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], "--image-id", "img00000",
            "--attribute", planted["0"], "--out", out,
        ) == 0
        tensors = list(out.glob("*.ftns"))
        assert len(tensors) == 1
        assert tensors[0].with_suffix(".pgm").exists()

    def test_retrieve_planted_attribute(self, pipeline, capsys):
        planted = json.loads(pipeline["planted"].read_text())
        assert _run(
            "retrieve", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], planted["2"],
        ) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["query"] == [planted["2"]]
        assert len(payload["results"]) == 15  # 60 images over 4 classes

    def test_evaluate_writes_reports(self, pipeline):
        out = pipeline["root"] / "reports"
        assert _run(
            "evaluate", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], "--mapping", pipeline["mapping"],
            "--seed", 7, "--out", out,
        ) == 0
        for name in (
            "explanations.json", "retrieval.json", "retrieval.txt",
            "pck.json", "pck.txt", "bleu.json", "bleu.txt",
        ):
            assert (out / name).exists(), name
        pck = json.loads((out / "pck.json").read_text())
        assert [m["label"] for m in pck["methods"]] == ["random", "constant", "proposed"]

    def test_evaluate_with_mapping_requires_seed(self, pipeline, caplog):
        code = _run(
            "evaluate", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], "--mapping", pipeline["mapping"],
            "--out", pipeline["root"] / "noseed",
        )
        assert code == 1
        assert "--seed" in caplog.text

    def test_report_stdout_json(self, pipeline, capsys):
        assert _run(
            "report", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"],
        ) == 0
        payload = json.loads(capsys.readouterr().out)
        # the generator's predictions are all correct by construction
        assert payload == {"n_failures": 0, "failures": []}


class TestExitCodes:
    def test_missing_manifest_is_io_error(self, pipeline):
        assert _run(
            "explain", "--manifest", "/nonexistent/manifest.json",
            "--vocab", pipeline["vocab"], "--pdf", pipeline["pdf"],
        ) == 2

    def test_invalid_synth_sizes_are_validation_errors(self, tmp_path):
        assert _run(
            "synth", "--n-filters", 3, "--n-attributes", 4, "--n-images", 5,
            "--n-classes", 2, "--seed", 0, "--out", tmp_path / "x",
        ) == 1

    def test_bad_flags_are_validation_errors(self, capsys):
        assert _run("explain", "--nonsense") == 1

    def test_bad_attribute_syntax(self, pipeline, capsys):
        assert _run(
            "ground", "--manifest", pipeline["manifest"], "--vocab", pipeline["vocab"],
            "--pdf", pipeline["pdf"], "--image-id", "img00000",
            "--attribute", "beak", "--out", pipeline["root"] / "h2",
        ) == 1


class TestDeterminism:
    def test_identical_invocations_are_byte_identical(self, pipeline):
        reports = []
        for name, workers in (("rep1", "1"), ("rep2", "4")):
            out = pipeline["root"] / name
            assert _run(
                "evaluate", "--manifest", pipeline["manifest"],
                "--vocab", pipeline["vocab"], "--pdf", pipeline["pdf"],
                "--mapping", pipeline["mapping"], "--seed", 7,
                "--workers", workers, "--out", out,
            ) == 0
            reports.append(out)
        first, second = reports
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
