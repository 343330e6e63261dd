import math

import numpy as np
from django.test import SimpleTestCase

from subband.step_control import (MAX_STEP, FixedStep, SetMembershipStep, ShrinkageVssStep, StepControlError,
                                  build_step_controller, controller_steps, shrink_error, sm_step, update_power,
                                  vss_step)


class StepFormulaTestCase(SimpleTestCase):

    def test_ShrinkError(self):
        self.assertEqual(shrink_error(0.1, 0.2), 0.0)
        self.assertAlmostEqual(shrink_error(-0.5, 0.2), -0.3, places=15)
        for e in (-2.5, 0.0, 0.3):
            self.assertEqual(shrink_error(e, 0.0), e)

    def test_ShrinkIsContraction(self):
        errors = np.linspace(-3, 3, 61)
        self.assertTrue(np.all(np.abs(shrink_error(errors, 0.4)) <= np.abs(errors)))

    def test_UpdatePower(self):
        power = 0.0
        for _ in range(10):
            power = update_power(power, 0.9, 0.0)
        self.assertEqual(power, 0.0)
        self.assertAlmostEqual(update_power(1.0, 0.9, 0.0), 0.9, places=15)
        power = 0.0
        for _ in range(2000):
            power = update_power(power, 0.9, 0.5)
        self.assertAlmostEqual(power, 0.25, places=12)

    def test_VssStep(self):
        self.assertEqual(vss_step(0.0, 0.01), 0.0)
        self.assertEqual(vss_step(0.01, 0.01), 0.5)
        self.assertEqual(vss_step(3.0, 1.0), 0.75)

    def test_SmStep(self):
        bound = 0.2
        self.assertEqual(sm_step(bound / 2, bound), 0.0)
        self.assertAlmostEqual(sm_step(-2 * bound, bound), 0.5, places=15)
        self.assertLess(sm_step(1e12, bound), 1.0)
        np.testing.assert_allclose(sm_step(np.array([0.1, 0.4]), bound), [0.0, 0.5])

    def test_StepsStayBelowOneWhenRatioRounds(self):
        self.assertLess(vss_step(1.0, 1e-18), 1.0)
        self.assertTrue(np.all(vss_step(np.ones(4), 1e-18) < 1.0))
        self.assertLess(sm_step(1e17, 1.0), 1.0)
        self.assertTrue(np.all(sm_step(np.array([1e17, -1e18]), 1.0) < 1.0))
        self.assertEqual(vss_step(1.0, 1e-18), MAX_STEP)


class StepControllerTestCase(SimpleTestCase):

    def test_FixedStep(self):
        np.testing.assert_array_equal(controller_steps(FixedStep(mu=1.0), [0.3, -4.0, 0.0]), [1.0, 1.0, 1.0])
        for mu in (0.0, 2.0, -0.1):
            with self.assertRaises(StepControlError):
                FixedStep(mu=mu)

    def test_SetMembershipBound(self):
        controller = SetMembershipStep(noise_variance=0.04, num_subbands=4, gamma=9.0)
        self.assertAlmostEqual(controller.bound, math.sqrt(9 * 0.04 / 4), places=15)
        steps = controller_steps(controller, [0.0, 0.1, 0.6, -1.2])
        np.testing.assert_allclose(steps, [0.0, 0.0, 0.5, 0.75], atol=1e-15)

    def test_VssColdStartBelowThreshold(self):
        controller = ShrinkageVssStep(noise_variance=0.04, num_subbands=4, filter_length=512)
        steps = controller_steps(controller, np.full(4, 0.5 * controller.threshold))
        np.testing.assert_array_equal(steps, np.zeros(4))

    def test_VssChainedHandExample(self):
        controller = ShrinkageVssStep(noise_variance=0.0025, num_subbands=1, filter_length=10, lam=3.0, kappa=1.0)
        self.assertAlmostEqual(controller.theta, 0.9, places=15)
        self.assertAlmostEqual(controller.threshold, math.sqrt(3 * 0.0025), places=15)
        steps = controller_steps(controller, [0.5 + controller.threshold])
        self.assertAlmostEqual(float(controller.power[0]), 0.025, places=12)
        self.assertAlmostEqual(float(steps[0]), 0.025 / 0.0275, places=12)

    def test_VssStateAdvancesOncePerCall(self):
        controller = ShrinkageVssStep(noise_variance=0.01, num_subbands=2, filter_length=20)
        controller_steps(controller, [1.0, -1.0])
        first = controller.power.copy()
        controller_steps(controller, [0.0, 0.0])
        np.testing.assert_allclose(controller.power, controller.theta * first)
        controller.reset()
        np.testing.assert_array_equal(controller.power, np.zeros(2))

    def test_StepsStayBelowOne(self):
        rng = np.random.default_rng(5)
        vss = ShrinkageVssStep(noise_variance=0.01, num_subbands=4, filter_length=64)
        sm = SetMembershipStep(noise_variance=0.01, num_subbands=4)
        for _ in range(500):
            errors = rng.standard_normal(4) * rng.choice([0.01, 1.0, 100.0])
            for controller in (vss, sm):
                steps = controller_steps(controller, errors)
                self.assertTrue(np.all((steps >= 0) & (steps < 1)))

    def test_InvalidParameters(self):
        with self.assertRaises(StepControlError):
            ShrinkageVssStep(noise_variance=0.0, num_subbands=4, filter_length=64)
        with self.assertRaises(StepControlError):
            ShrinkageVssStep(noise_variance=0.01, num_subbands=4, filter_length=64, lam=0.0)
        with self.assertRaises(StepControlError):
            ShrinkageVssStep(noise_variance=0.01, num_subbands=4, filter_length=64, kappa=7.0)
        with self.assertRaises(StepControlError):
            ShrinkageVssStep(noise_variance=0.01, num_subbands=8, filter_length=4)
        with self.assertRaises(StepControlError):
            SetMembershipStep(noise_variance=math.inf, num_subbands=4)
        with self.assertRaises(StepControlError):
            controller_steps(SetMembershipStep(noise_variance=0.01, num_subbands=4), [0.0, 0.0])

    def test_BuildByKind(self):
        self.assertIsInstance(build_step_controller('fixed', 0.0, 4, 64, mu=0.5), FixedStep)
        self.assertIsInstance(build_step_controller('set_membership', 0.01, 4, 64), SetMembershipStep)
        vss = build_step_controller('shrinkage_vss', 0.01, 4, 64, lam=4.0, kappa=2.0)
        self.assertEqual((vss.lam, vss.kappa), (4.0, 2.0))
        with self.assertRaises(StepControlError):
            build_step_controller('unknown', 0.01, 4, 64)
