import numpy as np
import pytest

from freqedit import (Image, ImageIOError, read_flow_pfm, read_float_map,
                      read_image, read_pfm, write_flow_pfm, write_float_map,
                      write_image, write_pfm)


class TestPng:
    def test_round_trip_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(0)
        for channels in (1, 3):
            img = Image(rng.uniform(0, 1, (9, 11, channels)))
            path = tmp_path / f"img{channels}.png"
            write_image(img, path)
            back = read_image(path)
            assert back.shape == img.shape
            assert np.abs(back.data - img.data).max() <= 1.0 / 510 + 1e-12

    def test_write_clamps_out_of_range(self, tmp_path):
        img = Image(np.array([[-0.4, 0.5], [1.7, 1.0]]))
        path = tmp_path / "clamped.png"
        write_image(img, path)
        back = read_image(path)
        assert back.data.min() == 0.0 and back.data.max() == 1.0

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "nope.png"
        with pytest.raises(ImageIOError, match="nope.png"):
            read_image(missing)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"this is not a png")
        with pytest.raises(ImageIOError, match="junk.png"):
            read_image(path)


class TestPfm:
    def test_round_trip_exact_gray(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(7, 5)).astype(np.float32)
        path = tmp_path / "map.pfm"
        write_pfm(path, data)
        back = read_pfm(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, data)

    def test_round_trip_exact_color(self, tmp_path):
        rng = np.random.default_rng(2)
        data = rng.normal(size=(4, 6, 3)).astype(np.float32)
        path = tmp_path / "map3.pfm"
        write_pfm(path, data)
        assert np.array_equal(read_pfm(path), data)

    def test_wrong_channel_count_rejected(self, tmp_path):
        with pytest.raises(ImageIOError):
            write_pfm(tmp_path / "bad.pfm", np.zeros((3, 3, 2)))

    def test_truncated_rejected(self, tmp_path):
        path = tmp_path / "trunc.pfm"
        write_pfm(path, np.zeros((4, 4), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ImageIOError, match="trunc.pfm"):
            read_pfm(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"P6\n3 3\n-1.0\n" + b"\x00" * 36)
        with pytest.raises(ImageIOError):
            read_pfm(path)


class TestFloatMap:
    def test_round_trip_exact_8_channels(self, tmp_path):
        rng = np.random.default_rng(3)
        data = rng.normal(size=(5, 4, 8)).astype(np.float32)
        path = tmp_path / "feat.f32"
        write_float_map(path, data)
        back = read_float_map(path)
        assert back.shape == (5, 4, 8)
        assert np.array_equal(back, data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageIOError, match="void.f32"):
            read_float_map(tmp_path / "void.f32")


class TestFlowPfm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        u_x = rng.normal(size=(6, 6)).astype(np.float32).astype(np.float64)
        u_y = rng.normal(size=(6, 6)).astype(np.float32).astype(np.float64)
        valid = rng.uniform(size=(6, 6)) > 0.5
        path = tmp_path / "flow.pfm"
        write_flow_pfm(path, u_x, u_y, valid)
        bx, by, bv = read_flow_pfm(path)
        assert np.array_equal(bx, u_x)
        assert np.array_equal(by, u_y)
        assert np.array_equal(bv, valid)

    def test_gray_pfm_is_not_a_flow(self, tmp_path):
        path = tmp_path / "gray.pfm"
        write_pfm(path, np.zeros((3, 3), dtype=np.float32))
        with pytest.raises(ImageIOError):
            read_flow_pfm(path)
