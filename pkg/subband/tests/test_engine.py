from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from subband.engine import DivergenceError, SafConfig, SafEngine, SafState, subband_errors, update_weights
from subband.filterbank import AnalysisMemory, SubbandFrame
from subband import engine as engine_module
from subband.proportionate import IdentityGain, IpnlmsGain
from subband.signals import gen_ar1, gen_sparse_echo_path, gen_white, synthesize_desired
from subband.step_control import FixedStep, ShrinkageVssStep


def make_state(weights, num_subbands):
    weights = np.asarray(weights, dtype=float)
    return SafState(weights=weights.copy(), iteration=0,
                    memory=AnalysisMemory(num_subbands, 1, weights.size),
                    last_errors=np.zeros(num_subbands), last_outputs=np.zeros(num_subbands),
                    last_steps=np.zeros(num_subbands))


def nlms_oracle(u, d, filter_length, mu, delta):
    """NLMS pleine bande codé indépendamment"""
    w = np.zeros(filter_length)
    line = np.zeros(filter_length)
    trajectory = []
    for n in range(u.size):
        line = np.roll(line, 1)
        line[0] = u[n]
        e = d[n] - line @ w
        w = w + mu * e * line / (line @ line + delta)
        trajectory.append(w.copy())
    return trajectory


class UpdateRuleTestCase(SimpleTestCase):

    def test_SubbandErrorHandCase(self):
        state = make_state([1.0, -1.0], 1)
        errors = subband_errors(state, SubbandFrame(regressors=np.array([[2.0, 3.0]]), desired=np.array([5.0])))
        np.testing.assert_array_equal(errors, [6.0])

    def test_ZeroWeightsErrorsEqualDesired(self):
        state = make_state(np.zeros(4), 2)
        frame = SubbandFrame(regressors=np.arange(8.0).reshape(2, 4), desired=np.array([1.5, -2.0]))
        np.testing.assert_array_equal(subband_errors(state, frame), frame.desired)

    def test_ScalarNlmsStep(self):
        state = make_state([0.0, 0.0], 1)
        frame = SubbandFrame(regressors=np.array([[1.0, 1.0]]), desired=np.array([2.0]))
        subband_errors(state, frame)
        updated = update_weights(state, frame, np.ones(2), np.array([1.0]), 0.0)
        np.testing.assert_array_equal(updated, [1.0, 1.0])

    def test_NoCorrectionWithoutErrorOrStep(self):
        rng = np.random.default_rng(1)
        frame = SubbandFrame(regressors=rng.standard_normal((4, 16)), desired=np.zeros(4))
        weights = rng.standard_normal(16)

        state = make_state(weights, 4)
        state.last_errors = np.zeros(4)
        np.testing.assert_array_equal(update_weights(state, frame, np.ones(16), np.ones(4), 0.001), weights)

        state = make_state(weights, 4)
        state.last_errors = rng.standard_normal(4)
        np.testing.assert_array_equal(update_weights(state, frame, np.ones(16), np.zeros(4), 0.001), weights)

    def test_ZeroRegressorWithoutRegularisation(self):
        state = make_state(np.zeros(3), 1)
        frame = SubbandFrame(regressors=np.zeros((1, 3)), desired=np.array([1.0]))
        subband_errors(state, frame)
        np.testing.assert_array_equal(update_weights(state, frame, np.ones(3), np.array([1.0]), 0.0), np.zeros(3))

    def test_GainScalingInvariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            frame = SubbandFrame(regressors=rng.standard_normal((4, 32)), desired=rng.standard_normal(4))
            weights = rng.standard_normal(32)
            gains = rng.uniform(0.05, 1.0, 32)
            steps = rng.uniform(0.0, 2.0, 4)
            reference_state = make_state(weights, 4)
            subband_errors(reference_state, frame)
            reference = update_weights(reference_state, frame, gains, steps, 0.0)
            for scale in (0.1, 10.0):
                state = make_state(weights, 4)
                subband_errors(state, frame)
                scaled = update_weights(state, frame, scale * gains, steps, 0.0)
                np.testing.assert_allclose(scaled, reference, rtol=1e-12, atol=1e-14)

    def test_DivergenceCarriesIteration(self):
        state = make_state(np.zeros(2), 1)
        state.iteration = 41
        frame = SubbandFrame(regressors=np.array([[1.0, 0.0]]), desired=np.array([np.inf]))
        subband_errors(state, frame)
        with self.assertRaises(DivergenceError) as context:
            update_weights(state, frame, np.ones(2), np.array([1.0]), 0.001)
        self.assertEqual(context.exception.iteration, 41)
        self.assertIsInstance(context.exception, ArithmeticError)


class EngineTestCase(SimpleTestCase):

    def test_NlmsReduction(self):
        u = gen_ar1(0.9, 10 ** 4, 1)
        path = gen_sparse_echo_path(16, 4, 2.0, 2)
        system = synthesize_desired(path, u, 30.0, 3)
        engine = SafEngine(SafConfig(filter_length=16, num_subbands=1, delta=0.01, gain_rule=IdentityGain(),
                                     step_controller=FixedStep(mu=0.7)))
        oracle = nlms_oracle(u, system.desired, 16, 0.7, 0.01)
        worst = 0.0
        for n in range(u.size):
            telemetry = engine.process_block(u[n:n + 1], system.desired[n:n + 1])
            worst = max(worst, float(np.max(np.abs(telemetry.weights - oracle[n]))))
        self.assertLessEqual(worst, 1e-12)

    def test_ZeroBlocksFromColdStart(self):
        for controller, expected in ((FixedStep(mu=0.5), 0.5),
                                     (ShrinkageVssStep(noise_variance=0.01, num_subbands=4, filter_length=32), 0.0)):
            engine = SafEngine(SafConfig(filter_length=32, num_subbands=4, step_controller=controller))
            for _ in range(5):
                telemetry = engine.process_block(np.zeros(4), np.zeros(4))
            self.assertFalse(np.any(engine.weights))
            np.testing.assert_array_equal(telemetry.steps, np.full(4, expected))
            self.assertEqual(telemetry.iteration, 5)

    def test_WeightsAreReadOnly(self):
        engine = SafEngine(SafConfig(filter_length=8, num_subbands=2))
        with self.assertRaises(ValueError):
            engine.weights[0] = 1.0

    def test_ResetReplaysTrajectory(self):
        u = gen_white(1.0, 800, 4)
        path = gen_sparse_echo_path(32, 4, 2.0, 5)
        system = synthesize_desired(path, u, 20.0, 6)

        def make():
            controller = ShrinkageVssStep(noise_variance=system.noise_variance, num_subbands=4, filter_length=32)
            return SafEngine(SafConfig(filter_length=32, num_subbands=4, step_controller=controller))

        def play(engine):
            for k in range(200):
                engine.process_block(u[4 * k:4 * k + 4], system.desired[4 * k:4 * k + 4])
            return engine.weights.copy()

        reference = play(make())
        engine = make()
        for k in range(50):
            engine.process_block(u[4 * k:4 * k + 4], system.desired[4 * k:4 * k + 4])
        engine.reset()
        engine.reset()
        self.assertEqual(engine.iteration, 0)
        np.testing.assert_array_equal(play(engine), reference)

    def test_ResetThenZeroBlock(self):
        engine = SafEngine(SafConfig(filter_length=16, num_subbands=2,
                                     step_controller=ShrinkageVssStep(noise_variance=0.01, num_subbands=2,
                                                                      filter_length=16)))
        engine.process_block([1.0, -1.0], [0.5, 0.2])
        engine.reset()
        telemetry = engine.process_block(np.zeros(2), np.zeros(2))
        self.assertFalse(np.any(telemetry.errors))
        self.assertFalse(np.any(telemetry.steps))
        self.assertFalse(np.any(telemetry.weights))

    def test_GainsComeFromCurrentWeights(self):
        engine = SafEngine(SafConfig(filter_length=8, num_subbands=2, gain_rule=IpnlmsGain()))
        with mock.patch('subband.engine.compute_gains', wraps=engine_module.compute_gains) as spy:
            engine.process_block([1.0, 0.5], [0.3, 0.1])
            before = engine.weights.copy()
            engine.process_block([0.2, -0.4], [0.0, 0.7])
        np.testing.assert_array_equal(spy.call_args_list[1].args[1], before)

    def test_FullbandErrors(self):
        u = gen_white(1.0, 40, 8)
        engine = SafEngine(SafConfig(filter_length=4, num_subbands=2), track_fullband=True)
        d = np.ones(40)
        errors = []
        weights = [engine.weights.copy()]
        for k in range(20):
            telemetry = engine.process_block(u[2 * k:2 * k + 2], d[2 * k:2 * k + 2])
            errors.extend(telemetry.fullband_errors)
            weights.append(telemetry.weights.copy())
        padded = np.concatenate([np.zeros(3), u])
        for n in (0, 7, 38):
            line = padded[n:n + 4][::-1]
            self.assertAlmostEqual(errors[n], 1.0 - line @ weights[n // 2], places=12)

    def test_InvalidConfig(self):
        with self.assertRaises(ValueError):
            SafConfig(filter_length=0, num_subbands=2)
        with self.assertRaises(ValueError):
            SafConfig(filter_length=8, num_subbands=2, delta=-1.0)
