import numpy as np
import pytest

from quadim import (
    ComplexSample,
    DataFormatError,
    ScalarField,
    SystemParams,
    simulate_frame,
)
from quadim.fileio import (
    read_f32r,
    read_frame_dir,
    read_frame_truth,
    read_pgm,
    read_probes_file,
    list_frame_dirs,
    parse_kv_text,
    write_f32r,
    write_frame_dir,
    write_manifest,
    write_pgm,
)


class TestF32r:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        field = ScalarField(rng.normal(size=(17, 23)).astype(np.float32), pitch=43.0)
        path = tmp_path / "field.f32r"
        write_f32r(path, field)
        back = read_f32r(path)
        assert back.pitch == 43.0
        np.testing.assert_array_equal(back.values, field.values)

    def test_header_is_ascii_line(self, tmp_path):
        field = ScalarField(np.zeros((2, 3)), pitch=1.5)
        path = tmp_path / "f.f32r"
        write_f32r(path, field)
        raw = path.read_bytes()
        header, rest = raw.split(b"\n", 1)
        assert header == b"3 2 1.5"
        assert len(rest) == 2 * 3 * 4

    def test_truncated_body_rejected(self, tmp_path):
        path = tmp_path / "bad.f32r"
        path.write_bytes(b"4 4 1\n\x00\x00")
        with pytest.raises(DataFormatError):
            read_f32r(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.f32r"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(DataFormatError):
            read_f32r(path)


class TestPgm:
    def test_round_trip_16bit(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.integers(0, 65535, size=(9, 7)).astype(float)
        path = tmp_path / "img.pgm"
        write_pgm(path, values)
        np.testing.assert_array_equal(read_pgm(path), values)

    def test_16bit_samples_are_big_endian(self, tmp_path):
        path = tmp_path / "one.pgm"
        write_pgm(path, np.array([[258.0]]))
        raw = path.read_bytes()
        assert raw == b"P5\n1 1\n65535\n\x01\x02"

    def test_8bit_mask(self, tmp_path):
        values = np.array([[0.0, 255.0], [255.0, 0.0]])
        path = tmp_path / "mask.pgm"
        write_pgm(path, values, maxval=255)
        np.testing.assert_array_equal(read_pgm(path), values)
        assert len(path.read_bytes()) == len(b"P5\n2 2\n255\n") + 4

    def test_out_of_range_rejected(self, tmp_path):
        with pytest.raises(Exception):
            write_pgm(tmp_path / "x.pgm", np.array([[-1.0]]))

    def test_non_p5_rejected(self, tmp_path):
        path = tmp_path / "ascii.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(DataFormatError):
            read_pgm(path)


class TestFrameDir:
    def _frame(self, delay=None):
        sample = ComplexSample.uniform(12, 12)
        return simulate_frame(
            sample, SystemParams(), exposure=0.5, timestamp=1.25, delay=delay
        )

    def test_round_trip(self, tmp_path):
        frame = self._frame(delay=0.75)
        d = tmp_path / "frame_0000"
        write_frame_dir(d, frame)
        back = read_frame_dir(d)
        assert back.exposure == frame.exposure
        assert back.timestamp == frame.timestamp
        assert back.delay == frame.delay
        for k in range(4):
            np.testing.assert_allclose(
                back.channels[k].values, frame.channels[k].values, rtol=1e-6
            )

    def test_delay_absent_when_not_a_sweep(self, tmp_path):
        d = tmp_path / "frame_0000"
        write_frame_dir(d, self._frame())
        assert "delay_um" not in (d / "meta.txt").read_text()
        assert read_frame_dir(d).delay is None

    def test_truth_rasters(self, tmp_path):
        sample = ComplexSample.uniform(12, 12)
        d = tmp_path / "frame_0000"
        write_frame_dir(d, self._frame(), truth=sample)
        phase, loss = read_frame_truth(d)
        np.testing.assert_array_equal(phase.values, sample.phase.values)
        np.testing.assert_array_equal(loss.values, sample.loss.values)

    def test_corrupted_meta_names_the_file(self, tmp_path):
        d = tmp_path / "frame_0000"
        write_frame_dir(d, self._frame())
        (d / "meta.txt").write_text("exposure_s = not-a-number\n")
        with pytest.raises(DataFormatError) as err:
            read_frame_dir(d)
        assert "meta.txt" in str(err.value)

    def test_missing_channel_rejected(self, tmp_path):
        d = tmp_path / "frame_0000"
        write_frame_dir(d, self._frame())
        (d / "ch2.f32r").unlink()
        with pytest.raises(DataFormatError) as err:
            read_frame_dir(d)
        assert "ch2" in str(err.value)

    def test_list_frame_dirs_sorted(self, tmp_path):
        for i in (2, 0, 1):
            write_frame_dir(tmp_path / f"frame_{i:04d}", self._frame())
        names = [p.name for p in list_frame_dirs(tmp_path)]
        assert names == ["frame_0000", "frame_0001", "frame_0002"]

    def test_bare_frame_dir_accepted(self, tmp_path):
        write_frame_dir(tmp_path, self._frame())
        assert list_frame_dirs(tmp_path) == [tmp_path]


class TestKvText:
    def test_comments_and_blanks(self):
        kv = parse_kv_text("# header\n\na = 1  # trailing\n b = two \n")
        assert kv == {"a": "1", "b": "two"}

    def test_duplicate_key_rejected(self):
        with pytest.raises(DataFormatError):
            parse_kv_text("a = 1\na = 2\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(DataFormatError):
            parse_kv_text("just some text\n")


class TestManifest:
    def test_manifest_lists_all_files(self, tmp_path):
        (tmp_path / "a.txt").write_text("hello\n")
        (tmp_path / "sub").mkdir()
        (tmp_path / "sub" / "b.bin").write_bytes(b"\x00\x01")
        write_manifest(tmp_path)
        lines = (tmp_path / "manifest.txt").read_text().strip().split("\n")
        assert len(lines) == 2
        assert lines[0].endswith("  a.txt")
        assert lines[1].endswith("  sub/b.bin")
        assert all(len(l.split("  ")[0]) == 64 for l in lines)

    def test_manifest_deterministic(self, tmp_path):
        (tmp_path / "a.txt").write_text("same\n")
        write_manifest(tmp_path)
        first = (tmp_path / "manifest.txt").read_bytes()
        write_manifest(tmp_path)
        assert (tmp_path / "manifest.txt").read_bytes() == first


class TestProbesFile:
    def test_parse(self, tmp_path):
        p = tmp_path / "probes.txt"
        p.write_text("# probes\np1 10 20\np2 30 40\n")
        assert read_probes_file(p) == [("p1", 10, 20), ("p2", 30, 40)]

    def test_bad_line_rejected(self, tmp_path):
        p = tmp_path / "probes.txt"
        p.write_text("p1 10\n")
        with pytest.raises(DataFormatError):
            read_probes_file(p)
