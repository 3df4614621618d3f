import unittest

import numpy as np

from app.errors import ConfigError
from app.net.flops import count_attention_macs, count_flops, msa_complexity
from app.net.network import count_parameters
from app.net.networkConfiguration import NetworkConfig


class TestFlopCounts(unittest.TestCase):
    def test_toy_configuration(self):
        report = count_flops(NetworkConfig(t=8, h=32, w=32, c=24, s=4, g=4))
        self.assertEqual(report.omega_lba, 4_194_304)
        self.assertEqual(report.omega_gsa, 4_194_304)
        self.assertEqual(report.omega_gta, 3_145_728)
        self.assertEqual(report.omega_bstf, 11_534_336)
        self.assertEqual(report.omega_gmsa, 3_240_099_840)

    def test_render_uses_thousands_separators(self):
        text = count_flops(NetworkConfig(t=8, h=32, w=32, c=24, s=4, g=4)).render()
        self.assertIn("11,534,336", text)
        self.assertIn("G-MSA", text)

    def test_sum_invariant_on_random_configurations(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            s, g = (int(v) for v in rng.choice([1, 2, 4], size=2))
            h, w = 8 * int(rng.integers(1, 5)), 8 * int(rng.integers(1, 5))
            config = NetworkConfig(t=int(rng.integers(1, 9)), h=h, w=w, c=3 * int(rng.integers(1, 9)), s=s, g=g)
            report = count_flops(config)
            self.assertEqual(report.omega_bstf, report.omega_lba + report.omega_gsa + report.omega_gta)
            self.assertEqual(report.params, count_parameters(config))

    def test_doubling_height(self):
        small = count_flops(NetworkConfig(t=4, h=16, w=16, c=12, s=2, g=2))
        large = count_flops(NetworkConfig(t=4, h=32, w=16, c=12, s=2, g=2))
        self.assertEqual(large.omega_bstf, 2 * small.omega_bstf)
        small_pairwise = small.omega_gmsa - 4 * (16 * 16 * 4) * 12**2
        large_pairwise = large.omega_gmsa - 4 * (32 * 16 * 4) * 12**2
        self.assertEqual(large_pairwise, 4 * small_pairwise)

    def test_lba_is_counted_with_the_grid_size(self):
        report = count_flops(NetworkConfig(t=2, h=8, w=8, c=6, s=1, g=2))
        self.assertEqual(report.omega_lba, report.omega_gsa)
        self.assertEqual(report.omega_lba, 4096)
        wider = count_flops(NetworkConfig(t=2, h=8, w=8, c=6, s=2, g=2))
        self.assertEqual(wider.omega_lba, report.omega_lba)

    def test_msa_complexity(self):
        self.assertEqual(msa_complexity(10, 3), 4 * 10 * 9 + 2 * 100 * 3)

    def test_blocked_attention_is_cheaper_than_global(self):
        report = count_flops(NetworkConfig.toy())
        self.assertLess(report.omega_bstf, report.omega_gmsa)


class TestInstrumentedCounts(unittest.TestCase):
    def test_measured_macs_match_closed_form(self):
        report = count_flops(NetworkConfig(t=1, h=4, w=4, c=6, s=2, g=2))
        self.assertEqual(count_attention_macs("lba", t=1, h=4, w=4, c=6, size=2), 512)
        self.assertEqual(count_attention_macs("gsa", t=1, h=4, w=4, c=6, size=2), 512)
        self.assertEqual(count_attention_macs("gta", t=1, h=4, w=4, c=6), 320)
        self.assertEqual((report.omega_lba, report.omega_gsa, report.omega_gta), (512, 512, 320))

    def test_gta_temporal_term(self):
        report = count_flops(NetworkConfig(t=4, h=4, w=4, c=6, s=2, g=2))
        self.assertEqual(count_attention_macs("gta", t=4, h=4, w=4, c=6), report.omega_gta)

    def test_unknown_branch(self):
        with self.assertRaises(ConfigError):
            count_attention_macs("swin", t=1, h=4, w=4, c=6)


if __name__ == "__main__":
    unittest.main()
