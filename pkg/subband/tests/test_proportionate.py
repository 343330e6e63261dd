import numpy as np
from django.test import SimpleTestCase

from subband.proportionate import IdentityGain, IpnlmsGain, build_gain_rule, compute_gains, gain_sum


class GainRuleTestCase(SimpleTestCase):

    def test_Identity(self):
        gains = compute_gains(IdentityGain(), np.array([0.3, -2.0, 0.0]))
        np.testing.assert_array_equal(gains, [1.0, 1.0, 1.0])
        self.assertEqual(gain_sum(compute_gains(IdentityGain(), np.zeros(512))), 512.0)

    def test_IpnlmsHandValue(self):
        gains = compute_gains(IpnlmsGain(alpha=0.0, xi=1e-300), np.array([1.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(gains, [0.625, 0.125, 0.125, 0.125], rtol=0, atol=1e-15)

    def test_AlphaMinusOneIsUniform(self):
        gains = compute_gains(IpnlmsGain(alpha=-1.0), np.array([5.0, -1.0, 0.0, 0.2]))
        np.testing.assert_allclose(gains, np.full(4, 0.25), rtol=0, atol=1e-15)

    def test_ZeroWeights(self):
        for alpha in (-0.5, 0.0, 0.5):
            total = gain_sum(compute_gains(IpnlmsGain(alpha=alpha), np.zeros(64)))
            self.assertAlmostEqual(total, (1 - alpha) / 2, places=15)

    def test_SumRule(self):
        rng = np.random.default_rng(3)
        for alpha in (-0.5, 0.0, 0.7):
            rule = IpnlmsGain(alpha=alpha, xi=0.001)
            w = rng.standard_normal(128)
            gains = compute_gains(rule, w)
            bound = rule.xi / (2 * np.sum(np.abs(w)) + rule.xi)
            self.assertLessEqual(abs(gain_sum(gains) - 1.0), bound + 1e-15)
            self.assertTrue(np.all(gains > 0))

    def test_Monotonicity(self):
        gains = compute_gains(IpnlmsGain(alpha=0.0), np.array([0.1, -0.5, 0.3]))
        self.assertGreater(gains[1], gains[2])
        self.assertGreater(gains[2], gains[0])

    def test_InvalidParameters(self):
        with self.assertRaises(ValueError):
            IpnlmsGain(alpha=1.5)
        with self.assertRaises(ValueError):
            IpnlmsGain(xi=0.0)
        with self.assertRaises(ValueError):
            build_gain_rule('unknown')
        with self.assertRaises(ValueError):
            compute_gains(IdentityGain(), np.zeros(0))

    def test_BuildFromName(self):
        self.assertEqual(build_gain_rule('identity'), IdentityGain())
        self.assertEqual(build_gain_rule('ipnlms', alpha=-0.5, xi=0.01), IpnlmsGain(alpha=-0.5, xi=0.01))
