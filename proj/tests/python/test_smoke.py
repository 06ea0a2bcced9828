import io
import pathlib

import pytest
from PIL import Image

import forgebench

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "fixtures"


def test_auc_four_samples():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    assert forgebench.auc(scores, labels) == pytest.approx(0.75, abs=1e-12)
    assert forgebench.auc_pairwise(scores, labels) == 0.75


def test_roc_endpoints():
    points, thresholds = forgebench.roc_curve([0.2, 0.2, 0.9], [0, 1, 1])
    assert points[0] == (0.0, 0.0)
    assert points[-1] == (1.0, 1.0)
    assert len(points) == len(thresholds)


def test_single_class_raises_with_code():
    with pytest.raises(forgebench.Error) as info:
        forgebench.auc([0.1, 0.2], [1, 1])
    assert info.value.code == "SingleClassInput"


def test_confusion_and_calibration():
    c = forgebench.confusion([0.6, 0.4, 0.7, 0.1], [1, 1, 0, 0])
    assert (c["tp"], c["fn"], c["fp"], c["tn"]) == (1, 1, 1, 1)
    h = forgebench.calibration_histogram([0.02, 0.04, 1.0], [0, 1, 1])
    assert len(h["pristine"]) == 20
    assert h["pristine"][0] == 1 and h["forged"][0] == 1 and h["forged"][19] == 1


def test_decode_jpeg_dct_matches_geometry():
    buf = io.BytesIO()
    Image.new("RGB", (40, 24), (120, 60, 200)).save(buf, format="JPEG", quality=75)
    plane = forgebench.decode_jpeg_dct(buf.getvalue())
    assert (plane["width"], plane["height"]) == (40, 24)
    assert (plane["blocks_wide"], plane["blocks_high"]) == (5, 3)
    assert len(plane["blocks"]) == 15
    assert all(len(b) == 64 for b in plane["blocks"])
    # Flat image: only DC terms survive quantization.
    assert all(v == 0 for b in plane["blocks"] for v in b[1:])
    with pytest.raises(forgebench.Error) as info:
        forgebench.decode_jpeg_dct(b"not a jpeg")
    assert info.value.code == "NotAJpeg"


def test_parse_confidence_paths():
    v = forgebench.parse_confidence('```json\n{"confidence": 0.8, "evidence": "seams"}\n```')
    assert v["parse_path"] == "StructuredJson"
    assert v["confidence"] == 0.8
    fallback = forgebench.parse_confidence("Confidence: 0.3")
    assert (fallback["parse_path"], fallback["confidence"]) == ("RegexFallback", 0.3)
    refused = forgebench.parse_confidence("I cannot help with that request.")
    assert (refused["parse_path"], refused["confidence"]) == ("Refusal", None)
    assert forgebench.default_prompt() == (FIXTURES / "default_prompt.txt").read_text()


def test_cli_dry_run_and_runs_dir(tmp_path):
    code, out, _ = forgebench.run_cli(["train-cnn", "--out", str(tmp_path / "w"), "--dry-run"])
    assert code == 0
    assert "epochs = " in out
    assert not (tmp_path / "w").exists()
    assert forgebench.run_cli(["frobnicate"])[0] == 2
    assert forgebench.load_runs(str(tmp_path / "missing")) == []


def test_sha256():
    assert forgebench.sha256_hex(b"abc") == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
