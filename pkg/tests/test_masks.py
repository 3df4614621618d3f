import os
import tempfile
import unittest

import numpy as np

from app.core.container import read_sidecar, write_sidecar
from app.errors import ConfigError, FormatError, ShapeError
from app.sensing.domain import MaskScheme, MaskSet
from app.sensing.masks import degrade, gen_rs, gen_uss, load_masks, save_masks, validate

RUN_SLOW = os.getenv("SCI_RUN_SLOW") == "1"


class TestRandomSampling(unittest.TestCase):
    def test_fill_fraction_near_density(self):
        m = gen_rs(8, 64, 64, density=0.5, seed=3)
        self.assertEqual(m.masks.dtype, np.uint8)
        for fill in validate(m).fill_fractions:
            self.assertGreaterEqual(fill, 0.46)
            self.assertLessEqual(fill, 0.54)

    def test_seed_determinism(self):
        np.testing.assert_array_equal(gen_rs(4, 16, 16, seed=9).masks, gen_rs(4, 16, 16, seed=9).masks)
        self.assertFalse(np.array_equal(gen_rs(4, 16, 16, seed=9).masks, gen_rs(4, 16, 16, seed=10).masks))

    def test_frames_are_uncorrelated(self):
        m = gen_rs(2, 256, 256, seed=1).masks.reshape(2, -1).astype(np.float64)
        corr = np.corrcoef(m[0], m[1])[0, 1]
        self.assertLess(abs(corr), 0.02)

    def test_report_skips_one_hot(self):
        report = validate(gen_rs(4, 8, 8, seed=2))
        self.assertTrue(report.passed)
        self.assertTrue(report.binary)
        self.assertFalse(report.one_hot_checked)

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigError):
            gen_rs(4, 8, 8, density=1.5)
        with self.assertRaises(ShapeError):
            gen_rs(0, 8, 8)


class TestUltraSparseSampling(unittest.TestCase):
    def test_single_frame_is_all_ones(self):
        m = gen_uss(1, 5, 7, seed=4)
        np.testing.assert_array_equal(m.masks, np.ones((1, 5, 7)))

    def test_stack_sums_to_one(self):
        m = gen_uss(8, 32, 32, seed=5)
        np.testing.assert_array_equal(m.masks.sum(axis=0), np.ones((32, 32)))
        np.testing.assert_array_equal(m.coverage(), np.ones((32, 32)))

    def test_fill_fraction_near_one_over_t(self):
        for fill in validate(gen_uss(4, 128, 128, seed=6)).fill_fractions:
            self.assertGreaterEqual(fill, 0.23)
            self.assertLessEqual(fill, 0.27)

    def test_regeneration_gives_same_active_frame(self):
        a = gen_uss(6, 16, 16, seed=7).masks.argmax(axis=0)
        b = gen_uss(6, 16, 16, seed=7).masks.argmax(axis=0)
        np.testing.assert_array_equal(a, b)

    def test_validate_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(1000 if RUN_SLOW else 50):
            t, h, w = (int(v) for v in rng.integers(1, 17, size=3))
            report = validate(gen_uss(t, h, w, seed=int(rng.integers(2**31))))
            self.assertTrue(report.passed)
            self.assertTrue(report.one_hot_checked)

    def test_broken_pixel_is_reported(self):
        masks = gen_uss(4, 8, 8, seed=8).masks.copy()
        masks[:, 2, 5] = 0
        report = validate(MaskSet(scheme=MaskScheme.USS, masks=masks))
        self.assertFalse(report.passed)
        self.assertEqual(report.violation_count, 1)
        self.assertEqual(report.first_violation, (2, 5))

    def test_ideal_masks_must_be_binary(self):
        with self.assertRaises(ValueError):
            MaskSet(scheme=MaskScheme.RS, masks=np.full((2, 2, 2), 0.5))


class TestDegrade(unittest.TestCase):
    def test_zero_parameters_keep_values(self):
        m = gen_uss(4, 16, 16, seed=1)
        degraded = degrade(m)
        self.assertFalse(degraded.ideal)
        self.assertEqual(degraded.masks.dtype, np.float32)
        np.testing.assert_array_equal(degraded.masks, m.masks)

    def test_blurred_uss_interior_sums_to_one(self):
        m = degrade(gen_uss(4, 32, 32, seed=2), blur_sigma=1.0)
        total = m.masks.astype(np.float64).sum(axis=0)
        np.testing.assert_allclose(total[5:-5, 5:-5], 1.0, atol=1e-6)
        self.assertLessEqual(total.max(), 1.0 + 1e-6)
        self.assertGreaterEqual(m.masks.min(), 0.0)
        self.assertLessEqual(m.masks.max(), 1.0)

    def test_degraded_uss_skips_one_hot(self):
        report = validate(degrade(gen_uss(4, 16, 16), shift=(0.5, 0.25)))
        self.assertFalse(report.one_hot_checked)
        self.assertTrue(report.passed)

    def test_shift_moves_content(self):
        m = MaskSet(scheme=MaskScheme.RS, masks=np.pad(np.ones((1, 2, 2)), ((0, 0), (2, 4), (2, 4))))
        shifted = degrade(m, shift=(1.0, 0.0))
        np.testing.assert_allclose(shifted.masks[0, 3:5, 2:4], 1.0)
        self.assertEqual(float(shifted.masks[0, 2, 2]), 0.0)

    def test_kernel_wider_than_plane(self):
        with self.assertRaises(ShapeError):
            degrade(gen_uss(2, 16, 16), blur_sigma=5.0)

    def test_negative_sigma(self):
        with self.assertRaises(ConfigError):
            degrade(gen_uss(2, 16, 16), blur_sigma=-1.0)


class TestMaskFiles(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "masks.stns")

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        for m in [gen_rs(4, 8, 12, density=0.3, seed=11), gen_uss(3, 8, 8, seed=12), degrade(gen_uss(3, 8, 8), shift=(0.5, 0))]:
            save_masks(m, self.path)
            back = load_masks(self.path)
            self.assertEqual(back.scheme, m.scheme)
            self.assertEqual(back.seed, m.seed)
            self.assertEqual(back.ideal, m.ideal)
            self.assertEqual(back.density, m.density)
            self.assertEqual(back.masks.tobytes(), m.masks.tobytes())

    def test_truncated_payload(self):
        save_masks(gen_uss(2, 4, 4), self.path)
        with open(self.path, "rb") as f:
            data = f.read()
        with open(self.path, "wb") as f:
            f.write(data[:-5])
        with self.assertRaises(FormatError):
            load_masks(self.path)

    def test_sidecar_shape_mismatch(self):
        save_masks(gen_uss(2, 4, 4), self.path)
        record = read_sidecar(self.path)
        record["frames"] = "3"
        write_sidecar(self.path, record)
        with self.assertRaises(FormatError):
            load_masks(self.path)

    def test_missing_sidecar(self):
        save_masks(gen_uss(2, 4, 4), self.path)
        os.remove(self.path + ".meta")
        with self.assertRaises(FormatError):
            load_masks(self.path)


if __name__ == "__main__":
    unittest.main()
