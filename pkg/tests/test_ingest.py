import math

import numpy as np
import pytest

from perfquant.errors import InvalidInput, ParseError
from perfquant.ingest import (CohortManifest, PatientEntry, PixelBlock, RoiRef,
                              RoiSeries, aggregate_pixels, load_manifest,
                              load_series, save_manifest, save_series,
                              threshold_dispersion)


def make_block(frames, dt=0.1):
    frames = np.asarray(frames, dtype=float)
    ts = np.arange(frames.shape[0]) * dt
    return PixelBlock(frames=frames, timestamps=ts, patient_id="p0", roi_id="r0")


class TestAggregatePixels:
    def test_identical_pixels_have_zero_dispersion(self):
        block = make_block(np.full((3, 4, 4), 7.0))
        series = aggregate_pixels(block)
        assert np.allclose(series.intensity, 7.0)
        assert np.allclose(series.dispersion, 0.0)

    def test_two_point_frame(self):
        block = make_block(np.array([[[1.0, 3.0]], [[1.0, 3.0]]]))
        series = aggregate_pixels(block)
        assert series.intensity[0] == pytest.approx(2.0)
        # population standard deviation of {1, 3}
        assert series.dispersion[0] == pytest.approx(1.0)

    def test_matches_two_pass_computation(self, rng):
        frames = rng.uniform(0.0, 255.0, size=(5, 100, 100))
        series = aggregate_pixels(make_block(frames))
        for k in range(5):
            pixels = [float(v) for v in frames[k].ravel()]
            mean = math.fsum(pixels) / len(pixels)
            var = math.fsum((v - mean) ** 2 for v in pixels) / len(pixels)
            assert series.intensity[k] == pytest.approx(mean, rel=1e-12)
            assert series.dispersion[k] == pytest.approx(math.sqrt(var), rel=1e-12)

    def test_intensity_bounded_by_frame_extremes(self, rng):
        frames = rng.uniform(0.0, 50.0, size=(6, 9, 9))
        series = aggregate_pixels(make_block(frames))
        assert np.all(series.intensity >= frames.min(axis=(1, 2)))
        assert np.all(series.intensity <= frames.max(axis=(1, 2)))

    def test_empty_frame_rejected(self):
        with pytest.raises(InvalidInput):
            PixelBlock(frames=np.empty((3, 0, 4)), timestamps=np.arange(3.0))

    def test_non_uniform_timestamps_rejected(self):
        block = PixelBlock(frames=np.ones((3, 2, 2)),
                           timestamps=np.array([0.0, 0.1, 0.5]))
        with pytest.raises(InvalidInput):
            aggregate_pixels(block)


class TestThresholdDispersion:
    def test_clamps_from_below(self):
        s = RoiSeries("p", "r", 1.0, [1.0, 2.0, 3.0], [0.0, 0.5, 2.0])
        out = threshold_dispersion(s, 1.0)
        assert out.dispersion.tolist() == [1.0, 1.0, 2.0]

    def test_all_zero(self):
        s = RoiSeries("p", "r", 1.0, [1.0, 1.0], [0.0, 0.0])
        assert threshold_dispersion(s, 0.1).dispersion.tolist() == [0.1, 0.1]

    def test_identity_when_already_above(self):
        s = RoiSeries("p", "r", 1.0, [1.0, 1.0], [2.0, 3.0])
        assert threshold_dispersion(s, 1.0).dispersion.tolist() == [2.0, 3.0]

    def test_idempotent(self, rng):
        s = RoiSeries("p", "r", 1.0, rng.uniform(0, 9, 20), rng.uniform(0, 3, 20))
        once = threshold_dispersion(s, 1.0)
        twice = threshold_dispersion(once, 1.0)
        assert np.array_equal(once.dispersion, twice.dispersion)

    def test_does_not_mutate_input(self):
        disp = np.array([0.0, 2.0])
        s = RoiSeries("p", "r", 1.0, [1.0, 1.0], disp)
        threshold_dispersion(s, 1.0)
        assert s.dispersion.tolist() == [0.0, 2.0]


class TestSeriesInvariants:
    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            RoiSeries("p", "r", 1.0, [1.0, 2.0], [0.0])

    def test_negative_intensity(self):
        with pytest.raises(InvalidInput):
            RoiSeries("p", "r", 1.0, [1.0, -2.0], [0.0, 0.0])

    def test_bad_interval(self):
        with pytest.raises(InvalidInput):
            RoiSeries("p", "r", 0.0, [1.0, 2.0], [0.0, 0.0])

    def test_duration(self):
        s = RoiSeries("p", "r", 0.5, [1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert s.duration_s == pytest.approx(1.0)


class TestSeriesFiles:
    def test_well_formed_file(self, tmp_path):
        f = tmp_path / "roi.csv"
        f.write_text("t,intensity,dispersion\n0.0,1.0,0.1\n0.5,2.0,0.2\n1.0,3.0,0.3\n")
        s = load_series(f)
        assert len(s) == 3
        assert s.sample_interval_s == pytest.approx(0.5)

    def test_negative_intensity_line_number(self, tmp_path):
        f = tmp_path / "roi.csv"
        f.write_text("t,intensity,dispersion\n0.0,1.0,0.1\n0.5,-2.0,0.2\n")
        with pytest.raises(ParseError) as err:
            load_series(f)
        assert err.value.line == 3

    def test_non_monotone_time(self, tmp_path):
        f = tmp_path / "roi.csv"
        f.write_text("t,intensity,dispersion\n0.0,1.0,0.1\n0.5,2.0,0.2\n0.25,3.0,0.3\n")
        with pytest.raises(ParseError) as err:
            load_series(f)
        assert err.value.line == 4

    def test_malformed_row(self, tmp_path):
        f = tmp_path / "roi.csv"
        f.write_text("t,intensity,dispersion\n0.0,1.0\n")
        with pytest.raises(ParseError):
            load_series(f)

    def test_round_trip(self, tmp_path, rng):
        s = RoiSeries("p7", "r3", 0.1, rng.uniform(0, 100, 64),
                      rng.uniform(0, 5, 64), label="benign")
        f = tmp_path / "roi.csv"
        save_series(s, f)
        back = load_series(f, patient_id="p7", roi_id="r3", label="benign")
        assert np.array_equal(back.intensity, s.intensity)
        assert np.array_equal(back.dispersion, s.dispersion)
        assert back.sample_interval_s == s.sample_interval_s


class TestManifest:
    def make_manifest(self, tmp_path):
        s = RoiSeries("p0", "r0", 0.1, [1.0, 2.0, 3.0], [0.1, 0.1, 0.1])
        (tmp_path / "p0").mkdir()
        save_series(s, tmp_path / "p0" / "r0.csv")
        entry = PatientEntry("p0", "cancer",
                             [RoiRef("r0", "p0/r0.csv", "cancer")])
        return CohortManifest(patients=[entry], root=tmp_path)

    def test_round_trip(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        save_manifest(manifest, tmp_path / "manifest.json")
        back = load_manifest(tmp_path / "manifest.json")
        assert back.patients[0].patient_id == "p0"
        assert back.patients[0].rois[0].annotation == "cancer"
        series = back.load_roi(back.patients[0], back.patients[0].rois[0])
        assert len(series) == 3

    def test_missing_file_rejected(self, tmp_path):
        manifest = self.make_manifest(tmp_path)
        manifest.patients[0].rois.append(RoiRef("r1", "p0/r1.csv", "normal"))
        save_manifest(manifest, tmp_path / "manifest.json")
        with pytest.raises(ParseError):
            load_manifest(tmp_path / "manifest.json")

    def test_duplicate_patient_ids_rejected(self):
        e = PatientEntry("p0", "normal", [])
        with pytest.raises(InvalidInput):
            CohortManifest(patients=[e, PatientEntry("p0", "benign", [])])
