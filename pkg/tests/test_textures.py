import numpy as np
import pytest

from emberforge.errors import EmptyTexture, MalformedFile, ShapeMismatch
from emberforge.textures import (
    TextureMap,
    color_entropy,
    linear_to_srgb,
    luminance,
    read_emtx,
    srgb_to_linear,
    write_emtx,
)


class TestTextureMap:
    def test_shape_and_immutability(self, rng):
        arr = rng.random((4, 6, 3))
        tex = TextureMap.from_array(arr)
        assert (tex.width, tex.height, tex.channels) == (6, 4, 3)
        with pytest.raises(ValueError):
            tex.data[0, 0, 0] = 1.0

    def test_two_channel_rejected(self):
        with pytest.raises(ShapeMismatch):
            TextureMap.from_array(np.zeros((2, 2, 2)))

    def test_nonfinite_rejected(self):
        arr = np.zeros((2, 2, 3))
        arr[0, 0, 0] = np.nan
        with pytest.raises(ShapeMismatch):
            TextureMap.from_array(arr)

    def test_constant(self):
        tex = TextureMap.constant([0.1, 0.2, 0.3])
        assert tex.is_constant
        assert np.allclose(tex.data[0, 0], [0.1, 0.2, 0.3])

    def test_grayscale_from_2d(self):
        tex = TextureMap.from_array(np.ones((3, 5)))
        assert tex.channels == 1

    def test_resized_nearest_identity(self, rng):
        tex = TextureMap.from_array(rng.random((8, 8, 3)))
        assert tex.resized_nearest(8, 8) is tex

    def test_resized_nearest_downsample(self):
        arr = np.zeros((4, 4, 3))
        arr[:2, :2] = 1.0
        small = TextureMap.from_array(arr).resized_nearest(2, 2)
        assert small.data[0, 0, 0] == 1.0
        assert small.data[1, 1, 0] == 0.0


class TestColorSpace:
    def test_srgb_round_trip(self, rng):
        x = rng.random(1000)
        assert np.allclose(srgb_to_linear(linear_to_srgb(x)), x, atol=1e-12)

    def test_srgb_reference_points(self):
        # linear 1.0 <-> encoded 1.0; the piecewise knee at 0.04045
        assert linear_to_srgb(np.array(1.0)) == pytest.approx(1.0)
        assert srgb_to_linear(np.array(0.04045)) == pytest.approx(0.04045 / 12.92)
        assert srgb_to_linear(np.array(0.5)) == pytest.approx(0.21404114, abs=1e-6)

    def test_luminance_rec709(self):
        assert luminance(np.array([[[1.0, 0.0, 0.0]]]))[0, 0] == pytest.approx(0.2126)
        assert luminance(np.array([[[1.0, 1.0, 1.0]]]))[0, 0] == pytest.approx(1.0)


class TestColorEntropy:
    def test_uniform_color_zero_bits(self):
        assert color_entropy(TextureMap.from_array(np.full((8, 8, 3), 0.4))) == 0.0

    def test_two_equal_colors_one_bit(self):
        arr = np.zeros((2, 2, 3))
        arr[:, 1] = 0.99
        assert color_entropy(TextureMap.from_array(arr)) == pytest.approx(1.0)

    def test_random_matches_bruteforce_oracle(self, rng):
        arr = rng.integers(0, 256, size=(64, 64, 3)) / 255.0
        tex = TextureMap.from_array(arr)
        # independent double-loop histogram
        counts = {}
        for y in range(64):
            for x in range(64):
                key = tuple(min(int(v * 8), 7) for v in arr[y, x])
                counts[key] = counts.get(key, 0) + 1
        p = np.array(list(counts.values()), dtype=float)
        p /= p.sum()
        expected = float(-(p * np.log2(p)).sum())
        assert color_entropy(tex) == pytest.approx(expected, abs=0.1)
        assert color_entropy(tex) == pytest.approx(expected, abs=1e-9)

    def test_permutation_invariant(self, rng):
        arr = rng.random((16, 16, 3))
        flat = arr.reshape(-1, 3)
        shuffled = flat[rng.permutation(len(flat))].reshape(16, 16, 3)
        a = color_entropy(TextureMap.from_array(arr))
        b = color_entropy(TextureMap.from_array(shuffled))
        assert a == pytest.approx(b, abs=1e-12)

    def test_nearest_2x_upscale_invariant(self, rng):
        arr = rng.random((16, 16, 3))
        tex = TextureMap.from_array(arr)
        big = tex.resized_nearest(32, 32)
        assert color_entropy(big) == pytest.approx(color_entropy(tex), abs=1e-9)

    def test_single_channel_rejected(self):
        with pytest.raises(ShapeMismatch):
            color_entropy(TextureMap.constant(0.5, channels=1))

    def test_empty_rejected(self):
        with pytest.raises(EmptyTexture):
            color_entropy(TextureMap.from_array(np.zeros((0, 0, 3))))


class TestEmtxIO:
    def test_round_trip(self, rng, tmp_path):
        tex = TextureMap.from_array(rng.random((5, 7, 3)))
        path = tmp_path / "t.emtx"
        write_emtx(tex, path)
        back = read_emtx(path)
        assert back.width == 7 and back.height == 5
        # float32 storage
        assert np.allclose(back.data, tex.data, atol=1e-7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emtx"
        path.write_bytes(b"NOPE" + b"\0" * 12)
        with pytest.raises(MalformedFile):
            read_emtx(path)
