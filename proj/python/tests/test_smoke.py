import json

import numpy as np
import pytest

import mmsift


def disc(side, diameter, value=1000):
    rr, cc = np.mgrid[0:side, 0:side]
    centre = (side - 1) / 2
    img = np.zeros((side, side), dtype=np.uint16)
    img[(rr - centre) ** 2 + (cc - centre) ** 2 <= diameter**2 / 4] = value
    return img


def test_scale_bands_default_magnitudes():
    bands = mmsift.compute_scale_bands()
    assert [b.index for b in bands] == [1, 2]
    assert bands[0].m1_px == pytest.approx(15.61, abs=0.01)
    assert bands[0].m2_px == pytest.approx(61.81, abs=0.01)
    assert bands[1].m2_px == pytest.approx(244.77, abs=0.01)
    assert bands[1].m1_px == bands[0].m2_px
    assert [b.m2_rounded for b in bands] == [61, 245]


def test_open_line_fast_equals_naive():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 65536, size=(32, 32), dtype=np.uint16)
    for length in (3, 9, 15):
        for angle in range(0, 180, 10):
            fast = mmsift.open_line(img, length, angle)
            slow = mmsift.open_line(img, length, angle, naive=True)
            assert fast.dtype == np.uint16
            np.testing.assert_array_equal(fast, slow)
            assert (fast <= img).all()


def test_line_offsets_are_symmetric():
    offsets = mmsift.line_offsets(9, 30.0)
    assert len(offsets) == 9
    assert set(offsets) == {(-dy, -dx) for dy, dx in offsets}


def test_sift_bands_and_pcm_colours():
    small = disc(256, 30)
    bands = mmsift.sift(small)
    assert len(bands) == 2 and bands[0].dtype == np.uint32
    assert bands[0].max() >= 0.5 * 18 * 1000
    assert bands[1][128, 128] == 0
    mask = np.ones_like(small, dtype=np.uint8)
    pcm = mmsift.compose_pcm(small, bands, mask)
    assert pcm.shape == (256, 256, 3)
    r, g, b = pcm[128, 128]
    assert g >= b

    large = disc(256, 100)
    pcm = mmsift.compose_pcm(large, mmsift.sift(large), mask)
    r, g, b = pcm[128, 128]
    assert b >= g


def test_config_changes_band_count():
    cfg = mmsift.SiftConfig()
    cfg.num_scales = 3
    cfg.num_orientations = 4
    assert len(mmsift.sift(disc(64, 10), cfg)) == 3
    cfg.num_orientations = 0
    with pytest.raises(ValueError, match="num_orientations"):
        mmsift.sift(disc(64, 10), cfg)


def test_wavelet_downsample_keeps_constants():
    out = mmsift.wavelet_downsample(np.full((64, 64), 40000, dtype=np.uint16))
    assert out.shape == (16, 16)
    assert (out == 40000).all()


def test_blob_detect_finds_a_disc():
    img = disc(256, 30)
    bands = mmsift.sift(img)
    dets = mmsift.blob_detect(bands, np.ones_like(img, dtype=np.uint8), mmsift.DetectorParams(), 1.0)
    assert len(dets) == 1
    assert dets[0]["source_band"] == 1
    truth = (img > 0).astype(np.uint8)
    assert mmsift.dice(dets[0]["mask"], truth) > 0.5


def test_evaluation_arithmetic():
    assert mmsift.tpr_at_fpi([(0.2, 0.4), (2.0, 0.8)], 0.9) == pytest.approx(0.5556, abs=1e-4)
    assert mmsift.partial_aufc([(0.0, 0.0), (5.0, 1.0)]) == pytest.approx(0.5)


def test_pipeline_on_phantoms(tmp_path):
    mmsift.write_phantom_dataset(tmp_path / "ph")
    report = mmsift.run_pipeline(str(tmp_path / "ph" / "manifest.json"), str(tmp_path / "out"))
    assert len(report["splits"]) == 2
    assert (tmp_path / "out" / "sift" / "p01_pcm.png").exists()
    on_disk = json.loads((tmp_path / "out" / "report.json").read_text())
    assert on_disk == report
    for split in report["splits"]:
        assert split["tpr_at_ref_fpi"] == 1.0


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(OSError):
        mmsift.run_pipeline(str(tmp_path / "absent.json"), str(tmp_path / "out"))
    with pytest.raises(ValueError):
        mmsift.run_pipeline(str(tmp_path / "absent.json"), str(tmp_path / "out"), '{"bogus": 1}')
    with pytest.raises(ValueError):
        mmsift.wavelet_downsample(np.zeros((4, 4, 2), dtype=np.uint16))
