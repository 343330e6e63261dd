import math

import numpy as np
from django.test import SimpleTestCase

from subband.diagnostics import (NMSD_FLOOR_DB, BoundSample, collect_bound_samples, empirical_step_bound,
                                 energy_relation_check, erle_db, gamma_matrix, moving_power, nmsd_db,
                                 noise_free_errors, subband_noise_components)
from subband.engine import SafConfig, SafEngine
from subband.filterbank import SubbandFrame
from subband.proportionate import IdentityGain
from subband.signals import gen_sparse_echo_path, gen_white, synthesize_desired
from subband.step_control import FixedStep


def run_steps(engine, u, d, skip=0):
    """Rejoue (u, d) bloc par bloc et renvoie (w(k), w(k+1), télémétrie) à chaque itération"""
    num_subbands = engine.config.num_subbands
    for k in range(u.size // num_subbands):
        w_k = engine.weights.copy()
        telemetry = engine.process_block(u[k * num_subbands:(k + 1) * num_subbands],
                                         d[k * num_subbands:(k + 1) * num_subbands])
        if k >= skip:
            yield w_k, telemetry.weights.copy(), telemetry


class MetricTestCase(SimpleTestCase):

    def test_NmsdHandValues(self):
        w_o = np.array([0.6, 0.0, -0.8])
        self.assertEqual(nmsd_db(w_o, np.zeros(3)), 0.0)
        self.assertAlmostEqual(nmsd_db(w_o, 0.9 * w_o), -20.0, places=10)
        self.assertEqual(nmsd_db(w_o, w_o), NMSD_FLOOR_DB)

    def test_NmsdScaleInvariance(self):
        rng = np.random.default_rng(1)
        w_o = rng.standard_normal(16)
        w = rng.standard_normal(16)
        for scale in (1e-3, 7.0):
            self.assertAlmostEqual(nmsd_db(scale * w_o, scale * w), nmsd_db(w_o, w), places=10)

    def test_NmsdRejectsDegenerateInputs(self):
        with self.assertRaises(ValueError):
            nmsd_db(np.zeros(4), np.ones(4))
        with self.assertRaises(ValueError):
            nmsd_db(np.ones(4), np.ones(3))

    def test_MovingPower(self):
        power = moving_power([1.0, 2.0, 3.0, 4.0], 2)
        np.testing.assert_allclose(power, [2.5, 6.5, 12.5])
        with self.assertRaises(ValueError):
            moving_power([1.0, 2.0], 3)
        with self.assertRaises(ValueError):
            moving_power([1.0, 2.0], 0)

    def test_ErleHandValues(self):
        desired = np.ones(2048)
        np.testing.assert_allclose(erle_db(desired, desired), np.zeros(1025), atol=1e-12)
        np.testing.assert_allclose(erle_db(desired, 0.1 * desired), np.full(1025, 20.0), atol=1e-9)
        np.testing.assert_array_equal(erle_db(desired, np.zeros(2048)), np.full(1025, 120.0))
        self.assertTrue(np.all(erle_db(np.zeros(2048), desired) == -120.0))


class NoiseFreeErrorTestCase(SimpleTestCase):

    def test_DecompositionWithSubbandNoise(self):
        u = gen_white(1.0, 2000, 1)
        path = gen_sparse_echo_path(32, 6, 2.0, 2)
        system = synthesize_desired(path, u, 20.0, 3)
        engine = SafEngine(SafConfig(filter_length=32, num_subbands=4, step_controller=FixedStep(mu=0.5)))
        noise = subband_noise_components(engine.bank, system.noise)
        self.assertEqual(noise.shape, (500, 4))
        worst = 0.0
        for k, (w_k, w_k1, telemetry) in enumerate(run_steps(engine, u, system.desired)):
            errors = noise_free_errors(path.weights, w_k, w_k1, telemetry.frame, subband_noise=noise[k])
            np.testing.assert_allclose(errors.a_priori + noise[k], telemetry.errors, rtol=0, atol=1e-10)
            worst = max(worst, errors.decomposition_residual)
        self.assertLessEqual(worst, 1e-10)

    def test_ErrorsWithoutNoise(self):
        frame = SubbandFrame(regressors=np.array([[1.0, 2.0], [0.0, 1.0]]), desired=np.zeros(2))
        errors = noise_free_errors([1.0, 1.0], [0.0, 1.0], [1.0, 1.0], frame)
        np.testing.assert_array_equal(errors.a_priori, [1.0, 0.0])
        np.testing.assert_array_equal(errors.a_posteriori, [0.0, 0.0])
        self.assertIsNone(errors.decomposition_residual)


class EnergyRelationTestCase(SimpleTestCase):

    def test_RelationHoldsOnRandomSteps(self):
        u = gen_white(1.0, 4000 + 80, 4)
        path = gen_sparse_echo_path(32, 6, 2.0, 5)
        system = synthesize_desired(path, u, 30.0, 6)
        engine = SafEngine(SafConfig(filter_length=32, num_subbands=4, step_controller=FixedStep(mu=0.8)))
        checked = 0
        for w_k, w_k1, telemetry in run_steps(engine, u, system.desired, skip=20):
            report = energy_relation_check(path.weights, w_k, w_k1, telemetry.frame, telemetry.gains)
            if report.singular:
                continue
            self.assertLessEqual(report.relative_residual, 1e-8)
            checked += 1
        self.assertGreaterEqual(checked, 900)

    def test_EuclideanFormWithIdentityGains(self):
        u = gen_white(1.0, 800, 7)
        path = gen_sparse_echo_path(32, 6, 2.0, 8)
        system = synthesize_desired(path, u, 30.0, 9)
        engine = SafEngine(SafConfig(filter_length=32, num_subbands=4, gain_rule=IdentityGain(),
                                     step_controller=FixedStep(mu=0.5)))
        for w_k, w_k1, telemetry in run_steps(engine, u, system.desired, skip=20):
            report = energy_relation_check(path.weights, w_k, w_k1, telemetry.frame, telemetry.gains)
            self.assertFalse(report.singular)
            self.assertLessEqual(report.euclidean_residual, 1e-8)
            self.assertLessEqual(report.relative_residual, 1e-8)

    def test_ZeroErrorStep(self):
        rng = np.random.default_rng(10)
        w_o = rng.standard_normal(8)
        frame = SubbandFrame(regressors=rng.standard_normal((2, 8)), desired=np.zeros(2))
        report = energy_relation_check(w_o, w_o, w_o, frame, np.ones(8))
        self.assertEqual(report.lhs, 0.0)
        self.assertEqual(report.rhs, 0.0)
        self.assertEqual(report.relative_residual, 0.0)

    def test_SingularCouplingIsReported(self):
        frame = SubbandFrame(regressors=np.zeros((2, 4)), desired=np.zeros(2))
        report = energy_relation_check(np.ones(4), np.zeros(4), np.zeros(4), frame, np.ones(4))
        self.assertTrue(report.singular)
        self.assertEqual(report.relative_residual, math.inf)
        self.assertIsNone(gamma_matrix(frame, np.ones(4)))

    def test_GammaHandCase(self):
        frame = SubbandFrame(regressors=np.array([[1.0, 0.0]]), desired=np.zeros(1))
        np.testing.assert_allclose(gamma_matrix(frame, np.array([2.0, 1.0])), [[1.0]], rtol=0, atol=1e-15)

    def test_NonPositiveGainsAreRejected(self):
        frame = SubbandFrame(regressors=np.eye(2), desired=np.zeros(2))
        with self.assertRaises(ValueError):
            energy_relation_check(np.ones(2), np.zeros(2), np.zeros(2), frame, np.array([1.0, 0.0]))


class StepBoundTestCase(SimpleTestCase):

    def make_engine(self):
        return SafEngine(SafConfig(filter_length=32, num_subbands=4, step_controller=FixedStep(mu=0.5)))

    def test_NoiseFreeBoundIsTwo(self):
        u = gen_white(1.0, 4000, 11)
        path = gen_sparse_echo_path(32, 6, 2.0, 12)
        system = synthesize_desired(path, u, math.inf, 13)
        samples = collect_bound_samples(self.make_engine(), path.weights, u, system.desired)
        self.assertGreater(len(samples), 0)
        self.assertAlmostEqual(empirical_step_bound(samples), 2.0, delta=1e-6)

    def test_NoisyBoundIsBelowTwo(self):
        u = gen_white(1.0, 8000, 14)
        path = gen_sparse_echo_path(32, 6, 2.0, 15)
        system = synthesize_desired(path, u, 20.0, 16)
        samples = collect_bound_samples(self.make_engine(), path.weights, u, system.desired)
        self.assertLess(empirical_step_bound(samples), 2.0)

    def test_HandCase(self):
        sample = BoundSample(a_priori=np.array([1.0]), errors=np.array([2.0]), gamma=np.array([[1.0]]))
        self.assertEqual(empirical_step_bound([sample]), 1.0)

    def test_UndefinedBound(self):
        with self.assertRaises(ValueError):
            empirical_step_bound([])
        zero = BoundSample(a_priori=np.zeros(2), errors=np.zeros(2), gamma=np.eye(2))
        with self.assertRaises(ValueError):
            empirical_step_bound([zero])
