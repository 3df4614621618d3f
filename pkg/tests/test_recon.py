import os
import tempfile
import unittest

import numpy as np

from app.errors import ShapeError
from app.net.checkpoint import Checkpoint, save_checkpoint
from app.net.network import init_params
from app.net.networkConfiguration import NetworkConfig
from app.pipeline.scenes import SceneKind, synth_scene
from app.recon.decode import decode
from app.recon.gaptv import GapTvConfig, gap_tv_decode, gap_tv_solve, tv_denoise
from app.recon.metrics import PSNR_CAP, compare, psnr, ssim
from app.sensing.domain import MaskScheme, MaskSet, Measurement, QuantSpec, VideoCube
from app.sensing.forward import coarse_estimate, encode, quantize
from app.sensing.masks import gen_rs, gen_uss


class TestPsnr(unittest.TestCase):
    def test_identical_cubes_hit_the_cap(self):
        x = np.random.default_rng(0).random((2, 8, 8))
        self.assertEqual(psnr(x, x), PSNR_CAP)

    def test_uniform_offset(self):
        a = np.zeros((3, 8, 8))
        self.assertAlmostEqual(psnr(a, a + 0.1), 20.0, places=9)

    def test_matches_formula(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((3, 6, 6)), rng.random((3, 6, 6))
        expected = np.mean([10 * np.log10(1.0 / np.mean((a[t] - b[t]) ** 2)) for t in range(3)])
        self.assertAlmostEqual(psnr(a, b), float(expected), places=9)

    def test_decreases_with_noise(self):
        rng = np.random.default_rng(2)
        x, noise = rng.random((2, 16, 16)), rng.standard_normal((2, 16, 16))
        scores = [psnr(x, x + sigma * noise) for sigma in [0.01, 0.02, 0.05, 0.1, 0.2]]
        self.assertTrue(all(b < a for a, b in zip(scores, scores[1:])))

    def test_pixel_permutation(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((1, 8, 8)), rng.random((1, 8, 8))
        self.assertAlmostEqual(psnr(np.rot90(a, axes=(1, 2)), np.rot90(b, axes=(1, 2))), psnr(a, b), places=12)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            psnr(np.zeros((2, 4, 4)), np.zeros((2, 4, 5)))


class TestSsim(unittest.TestCase):
    def test_identical(self):
        x = np.random.default_rng(4).random((2, 16, 16))
        self.assertEqual(ssim(x, x), 1.0)

    def test_inverted_binary_image(self):
        a = (np.random.default_rng(5).random((1, 32, 32)) < 0.5).astype(np.float64)
        self.assertLess(ssim(a, 1.0 - a), 0.2)

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        a, b = rng.random((2, 16, 16)), rng.random((2, 16, 16))
        self.assertAlmostEqual(ssim(a, b), ssim(b, a), places=12)

    def test_rotation_invariant(self):
        rng = np.random.default_rng(7)
        a = rng.random((1, 20, 20))
        b = np.clip(a + 0.1 * rng.standard_normal((1, 20, 20)), 0, 1)
        rotated = ssim(np.rot90(a, axes=(1, 2)), np.rot90(b, axes=(1, 2)))
        self.assertAlmostEqual(rotated, ssim(a, b), places=10)

    def test_frames_smaller_than_window(self):
        with self.assertRaises(ShapeError):
            ssim(np.zeros((1, 10, 10)), np.zeros((1, 10, 10)))

    def test_compare(self):
        x = np.random.default_rng(8).random((1, 16, 16))
        result = compare(x, x)
        self.assertEqual(result.psnr, PSNR_CAP)
        self.assertEqual(result.ssim, 1.0)


class TestGapTv(unittest.TestCase):
    def test_single_frame_returns_measurement(self):
        y = Measurement(values=np.random.default_rng(9).random((8, 8)))
        m = MaskSet(scheme=MaskScheme.USS, masks=np.ones((1, 8, 8)))
        np.testing.assert_allclose(gap_tv_decode(y, m).frames[0], y.values, atol=1e-12)

    def test_projections_are_measurement_consistent(self):
        scene = synth_scene(SceneKind.MOVING_SQUARE, 4, 16, 16, seed=1)
        m = gen_rs(4, 16, 16, seed=2)
        y = encode(scene, m)
        seen = []

        def check(k, x):
            seen.append(k)
            np.testing.assert_allclose(encode(VideoCube(frames=x), m).values, y.values, atol=1e-6)

        result = gap_tv_solve(y, m, GapTvConfig(iterations=10, accelerate=False), on_projection=check)
        self.assertEqual(seen, list(range(10)))
        self.assertEqual(len(result.residuals), 10)
        self.assertTrue(all(r < 1e-6 for r in result.projection_residuals))

    def test_output_is_clipped(self):
        scene = synth_scene(SceneKind.DRIFTING_GRADIENT, 4, 16, 16, seed=3)
        out = gap_tv_decode(encode(scene, gen_rs(4, 16, 16)), gen_rs(4, 16, 16), GapTvConfig(iterations=5))
        self.assertGreaterEqual(float(out.frames.min()), 0.0)
        self.assertLessEqual(float(out.frames.max()), 1.0)

    def test_beats_coarse_estimate_on_toy_scene(self):
        scene = synth_scene(SceneKind.MOVING_SQUARE, 8, 32, 32, seed=0)
        m = gen_uss(8, 32, 32, seed=0)
        y = encode(scene, m)
        decoded = gap_tv_decode(y, m)
        self.assertGreaterEqual(psnr(decoded, scene), psnr(coarse_estimate(y, m).clipped(), scene) + 2.0)

    def test_quantized_measurement_is_accepted(self):
        scene = synth_scene(SceneKind.MOVING_SQUARE, 4, 16, 16, seed=4)
        m = gen_uss(4, 16, 16)
        out = gap_tv_decode(quantize(encode(scene, m), QuantSpec()), m, GapTvConfig(iterations=5))
        self.assertEqual(out.extents, (4, 16, 16))

    def test_extent_mismatch(self):
        with self.assertRaises(ShapeError):
            gap_tv_decode(Measurement(values=np.zeros((8, 8))), gen_uss(2, 8, 9))

    def test_unknown_setting_rejected(self):
        with self.assertRaises(ValueError):
            GapTvConfig(iterations=5, momentum=0.9)

    def test_tv_denoise_flattens_noise(self):
        rng = np.random.default_rng(10)
        noisy = 0.5 + 0.1 * rng.standard_normal((1, 16, 16))
        smooth = tv_denoise(noisy, 0.1, 20)
        self.assertLess(float(smooth.std()), float(noisy.std()))
        np.testing.assert_array_equal(tv_denoise(noisy, 0.0, 5), noisy)


class TestDecode(unittest.TestCase):
    def setUp(self):
        self.config = NetworkConfig(t=2, h=8, w=8, c=6, s=2, g=2, heads=1, blocks=1)
        self.checkpoint = Checkpoint(config=self.config, params=init_params(self.config, seed=1))
        self.m = gen_uss(2, 8, 8, seed=3)
        self.y = encode(synth_scene(SceneKind.BOUNCING_DOT, 2, 8, 8), self.m)

    def test_output_range_and_determinism(self):
        out = decode(self.y, self.m, self.checkpoint)
        self.assertEqual(out.extents, (2, 8, 8))
        self.assertGreaterEqual(float(out.frames.min()), 0.0)
        self.assertLessEqual(float(out.frames.max()), 1.0)
        np.testing.assert_array_equal(out.frames, decode(self.y, self.m, self.checkpoint).frames)

    def test_from_checkpoint_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "ckpt")
            save_checkpoint(self.checkpoint, path)
            np.testing.assert_array_equal(decode(self.y, self.m, path).frames, decode(self.y, self.m, self.checkpoint).frames)

    def test_mask_extents_must_match_checkpoint(self):
        with self.assertRaises(ShapeError):
            decode(Measurement(values=np.zeros((16, 16))), gen_uss(2, 16, 16), self.checkpoint)


if __name__ == "__main__":
    unittest.main()
