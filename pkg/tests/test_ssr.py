import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsestream import kernels
from sparsestream import ssr as ssr_mod
from sparsestream.core import LOGISTIC, SQUARED, Example, LossModel
from sparsestream.errors import ConfigError, InvalidInputError, NumericalError
from sparsestream.ssr import (
    Mode,
    Schedule,
    SsrHyperparams,
    SsrLearner,
    TheoryMode,
    eta_from_alpha,
    lambda_schedule,
    ssr_avg_step,
    ssr_init,
    ssr_step,
    theory_lambda,
)
from sparsestream.testkit import ProxInstance, prox_oracle


def reference_run(examples, eps, eta, lam, averaged, model=SQUARED):
    """Straight transcription of the update rules, one loop iteration per step.

    Returns the lists w_1..w_{T+1} and (averaged) w_avg_1..w_avg_{T+1}.
    """
    d = examples[0].d
    theta = np.zeros(d)
    w_hist, avg_hist = [], []
    w_avg = np.zeros(d)
    for t in range(1, len(examples) + 2):
        if averaged:
            lam_t = lam * t**1.5
            den = eps + eta * t * (t - 1) / 2
        else:
            lam_t = lam * math.sqrt(t + 1)
            den = eps + eta * (t - 1)
        shrunk = np.sign(theta) * np.maximum(np.abs(theta) - lam_t, 0.0)
        w = np.zeros(d) if den == 0 else shrunk / den
        w_avg = (1 - 2 / (t + 1)) * w_avg + 2 / (t + 1) * w
        w_hist.append(w)
        avg_hist.append(w_avg.copy())
        if t == len(examples) + 1:
            break
        e = examples[t - 1]
        g = model.derivative(float(w @ e.x), e.y) * e.x
        theta = theta - (t if averaged else 1) * (g - eta * w)
    return w_hist, avg_hist


def random_examples(rng, n, d, model=SQUARED):
    out = []
    for _ in range(n):
        x = rng.standard_normal(d)
        y = float(rng.integers(0, 2)) if model.is_logistic else float(rng.normal(0, 2))
        out.append(Example(x, y))
    return out


class TestInit:
    def test_zero_state(self):
        s = ssr_init(3, SsrHyperparams(eta=1.0, lam=0.1))
        assert s.t == 1
        assert s.theta.tolist() == [0.0, 0.0, 0.0]
        assert s.w.tolist() == [0.0, 0.0, 0.0]
        assert s.w_avg is None

    def test_averaged_zero_average(self):
        s = ssr_init(3, SsrHyperparams(eta=1.0, lam=0.1), Mode.AVERAGED)
        assert s.w_avg.tolist() == [0.0, 0.0, 0.0]

    def test_degenerate_hyperparameters_rejected(self):
        with pytest.raises(ConfigError):
            SsrHyperparams(eta=0.0, lam=0.0, epsilon=0.0)
        # lambda alone keeps w_1 = 0 well defined
        SsrHyperparams(eta=0.0, lam=1.0, epsilon=0.0)

    @pytest.mark.parametrize("field", ["eta", "lam", "epsilon"])
    def test_negative_rejected(self, field):
        with pytest.raises(ConfigError):
            SsrHyperparams(**{"eta": 1.0, "lam": 1.0, "epsilon": 1.0, field: -1.0})

    def test_zero_dimension(self):
        with pytest.raises(InvalidInputError):
            ssr_init(0, SsrHyperparams(eta=1.0))

    def test_force_k_needs_k_below_d(self):
        with pytest.raises(InvalidInputError):
            ssr_init(3, SsrHyperparams(eta=1.0, lam=0.1, schedule=Schedule.force_k(3, 1.0)))

    def test_initial_lambda(self):
        assert ssr_init(2, SsrHyperparams(eta=1.0, lam=2.0)).lambda_t == pytest.approx(2 * math.sqrt(2))
        assert ssr_init(2, SsrHyperparams(eta=1.0, lam=2.0), Mode.AVERAGED).lambda_t == 2.0


class TestHandTraces:
    def test_streaming_one_dimension(self, backend):
        s = ssr_init(1, SsrHyperparams(eta=0.0, lam=0.0, epsilon=1.0))
        pred, s = ssr_step(s, Example([1.0], 1.0), SQUARED)
        assert pred == 0.0
        assert s.theta.tolist() == [1.0]
        assert s.w.tolist() == [1.0]
        assert s.t == 2

    def test_streaming_two_dimensions(self, backend):
        s = ssr_init(2, SsrHyperparams(eta=1.0, lam=0.5, epsilon=0.0))
        _, s = ssr_step(s, Example([1.0, 0.0], 2.0), SQUARED)
        assert s.theta.tolist() == [2.0, 0.0]
        assert s.lambda_t == pytest.approx(0.5 * math.sqrt(3))
        np.testing.assert_allclose(s.w, [2 - 0.5 * math.sqrt(3), 0.0], rtol=1e-15)
        assert s.w[0] == pytest.approx(1.134, abs=5e-4)

    def test_streaming_trace_matches_prox_oracle(self):
        inst = ProxInstance(epsilon=0.0, eta=1.0, history=[np.zeros(2)], g_sum=np.array([-2.0, 0.0]), lambda_t=0.5 * math.sqrt(3))
        s = ssr_init(2, SsrHyperparams(eta=1.0, lam=0.5, epsilon=0.0))
        _, s = ssr_step(s, Example([1.0, 0.0], 2.0), SQUARED)
        np.testing.assert_allclose(s.w, prox_oracle(inst), atol=1e-12)

    def test_averaged_one_dimension(self, backend):
        s = ssr_init(1, SsrHyperparams(eta=0.0, lam=0.0, epsilon=1.0), Mode.AVERAGED)
        pred, s = ssr_avg_step(s, Example([1.0], 1.0), SQUARED)
        assert pred == 0.0
        assert s.theta.tolist() == [1.0]
        assert s.w.tolist() == [1.0]
        assert s.w_avg[0] == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_forced_average(self, backend):
        # w_1 = 1, w_2 = 4 pushed through the blend: 1/3 * 1 + 2/3 * 4 = 3
        avg = np.zeros(1)
        w = np.empty(1)
        kernels.sparsify(np.array([1.0]), 0.0, 1.0, w, avg, 2.0 / 2.0)
        kernels.sparsify(np.array([4.0]), 0.0, 1.0, w, avg, 2.0 / 3.0)
        assert avg[0] == pytest.approx(3.0, rel=1e-15)

    def test_mode_mismatch(self):
        s = ssr_init(1, SsrHyperparams(eta=1.0))
        with pytest.raises(InvalidInputError):
            ssr_avg_step(s, Example([1.0], 1.0), SQUARED)
        a = ssr_init(1, SsrHyperparams(eta=1.0), Mode.AVERAGED)
        with pytest.raises(InvalidInputError):
            ssr_step(a, Example([1.0], 1.0), SQUARED)

    def test_logistic_prediction_is_probability(self):
        s = ssr_init(2, SsrHyperparams(eta=1.0, lam=0.0))
        pred, s = ssr_step(s, Example([1.0, 1.0], 1.0), LOGISTIC)
        assert pred == 0.5
        pred, _ = ssr_step(s, Example([1.0, 1.0], 1.0), LOGISTIC)
        assert 0.5 < pred < 1.0

    def test_dimension_mismatch(self):
        s = ssr_init(2, SsrHyperparams(eta=1.0))
        with pytest.raises(InvalidInputError):
            ssr_step(s, Example([1.0], 1.0), SQUARED)


@pytest.mark.parametrize("averaged", [False, True], ids=["streaming", "averaged"])
@pytest.mark.parametrize("model", [SQUARED, LossModel.huber(0.5), LOGISTIC], ids=lambda m: m.kind.value)
def test_matches_reference_transcription(backend, rng, averaged, model):
    exs = random_examples(rng, 60, 4, model)
    eps, eta, lam = 2.0, 0.7, 0.05
    w_hist, avg_hist = reference_run(exs, eps, eta, lam, averaged, model)
    mode = Mode.AVERAGED if averaged else Mode.STREAMING
    s = ssr_init(4, SsrHyperparams(eta=eta, lam=lam, epsilon=eps), mode)
    np.testing.assert_array_equal(s.w, w_hist[0])
    step = ssr_avg_step if averaged else ssr_step
    for t, e in enumerate(exs, 1):
        pred, s = step(s, e, model)
        assert pred == pytest.approx(model.predict(float(w_hist[t - 1] @ e.x)), rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(s.w, w_hist[t], rtol=1e-9, atol=1e-12)
        if averaged:
            np.testing.assert_allclose(s.w_avg, avg_hist[t], rtol=1e-9, atol=1e-12)


class TestSchedules:
    def test_examples(self):
        assert lambda_schedule(Schedule.sqrt(), 1.0, 3) == 2.0
        assert lambda_schedule(Schedule.batch(), 2.0, 4) == 16.0
        assert lambda_schedule(Schedule.constant(), 0.3, 99) == 0.3
        fk = Schedule.force_k(1, 1.0)
        assert lambda_schedule(fk, 0.0, 2, theta=np.array([5.0, 3.0, 1.0]), prev=0.0) == 4.0

    def test_force_k_keeps_previous(self):
        fk = Schedule.force_k(1, 1.0)
        assert lambda_schedule(fk, 0.0, 2, theta=np.array([5.0, 3.0, 1.0]), prev=10.0) == 10.0

    def test_force_k_errors(self):
        fk = Schedule.force_k(3, 1.0)
        with pytest.raises(InvalidInputError):
            lambda_schedule(fk, 0.0, 2, theta=np.ones(3))
        with pytest.raises(InvalidInputError):
            lambda_schedule(fk, 0.0, 2)
        with pytest.raises(ConfigError):
            Schedule.force_k(0, 1.0)
        with pytest.raises(ConfigError):
            Schedule.force_k(2, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 10), st.integers(1, 10_000))
    def test_monotone(self, lam, t):
        for sched in (Schedule.sqrt(), Schedule.batch()):
            assert lambda_schedule(sched, lam, t + 1) >= lambda_schedule(sched, lam, t)

    def test_config_round_trip(self):
        for sched in (Schedule.sqrt(), Schedule.batch(), Schedule.constant(), Schedule.force_k(4, 0.5)):
            assert Schedule.from_config(sched.to_config()) == sched
        with pytest.raises(ConfigError):
            Schedule.from_config({"kind": "force_k", "k": 2, "B": 1.0, "extra": 1})


class TestTheoryConstants:
    def test_prediction_mode_value(self):
        # 1.5 * sqrt(ln(60 * log2(200) / 0.1))
        assert theory_lambda(TheoryMode.PREDICTION, 1.0, 10, 100, 0.1) == pytest.approx(4.3553842198896024, rel=1e-12)
        # the rounded figure 4.356 is quoted for this instance
        assert theory_lambda("prediction", 1.0, 10, 100, 0.1) == pytest.approx(4.356, abs=1e-3)

    def test_other_modes_frozen(self):
        assert theory_lambda("estimation", 2.0, 1000, 8000, 0.1) == pytest.approx(
            3.0 * math.sqrt(math.log(6000 * math.log2(2 * 8000.0**3) / 0.1)), rel=1e-14
        )
        assert theory_lambda("support", 1.0, 10, 100, 0.1) == pytest.approx(1.5 * math.sqrt(math.log(20 * math.log2(200) / 0.1)), rel=1e-14)

    def test_irrepresentable_exceeds_support(self):
        for d, T in [(10, 100), (1000, 10_000), (1, 1)]:
            irrep = theory_lambda(TheoryMode.IRREPRESENTABLE, 1.0, d, T, 0.1, rho=0.0)
            assert irrep > theory_lambda(TheoryMode.SUPPORT, 1.0, d, T, 0.1)

    def test_rho_grows_constant(self):
        a = theory_lambda("irrepresentable", 1.0, 10, 100, 0.1, rho=0.0)
        b = theory_lambda("irrepresentable", 1.0, 10, 100, 0.1, rho=0.1)
        assert b > a

    def test_rho_out_of_range(self):
        with pytest.raises(InvalidInputError):
            theory_lambda("irrepresentable", 1.0, 10, 100, 0.1, rho=1 / math.sqrt(24))

    @pytest.mark.parametrize("mode", list(TheoryMode))
    def test_boundary_inputs_stay_real(self, mode):
        v = theory_lambda(mode, 1.0, 1, 1, 0.999999)
        assert math.isfinite(v) and v > 0

    def test_log_clamp_warns(self):
        with pytest.warns(RuntimeWarning):
            assert ssr_mod._clamped_log(0.5) == 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert ssr_mod._clamped_log(math.e) == pytest.approx(1.0)

    @pytest.mark.parametrize("kw", [dict(B=0.0), dict(delta=1.0), dict(delta=0.0), dict(d=0)])
    def test_invalid(self, kw):
        args = dict(B=1.0, d=10, T=100, delta=0.1)
        args.update(kw)
        with pytest.raises(InvalidInputError):
            theory_lambda("prediction", args["B"], args["d"], args["T"], args["delta"])

    def test_eta_from_alpha(self):
        assert eta_from_alpha(1.0) == 0.5
        assert eta_from_alpha(0.2) == pytest.approx(0.1)
        assert eta_from_alpha(2.0) == 1.0

    def test_from_theory(self):
        hp = SsrHyperparams.from_theory(B=1.0, d=10, T=100, delta=0.1, alpha=1.0)
        assert hp.eta == 0.5 and hp.epsilon == 0.0
        assert hp.lam == theory_lambda("estimation", 1.0, 10, 100, 0.1)


def _prox_instances(rng, n):
    for i in range(n):
        averaged = i % 2 == 1
        d = int(rng.integers(1, 6))
        t = int(rng.integers(2, 11))
        eps = float(rng.uniform(0, 2)) if i % 3 else 0.0
        eta = float(rng.uniform(0.1, 2))
        lam = float(rng.uniform(0, 0.5))
        model = [SQUARED, LossModel.huber(1.0), LOGISTIC][i % 3]
        yield averaged, d, t, eps, eta, lam, model


def test_prox_equivalence(rng):
    """Sparsified iterate equals the brute-force minimizer of the prox objective."""
    start = time.perf_counter()
    worst = 0.0
    count = 0
    for averaged, d, t, eps, eta, lam, model in _prox_instances(rng, 200):
        mode = Mode.AVERAGED if averaged else Mode.STREAMING
        s = ssr_init(d, SsrHyperparams(eta=eta, lam=lam, epsilon=eps), mode)
        history, g_sum = [], np.zeros(d)
        for step in range(1, t):
            e = random_examples(rng, 1, d, model)[0]
            w_s = s.w.copy()
            g = model.derivative(float(w_s @ e.x), e.y) * e.x
            history.append(w_s)
            g_sum += (step if averaged else 1) * g
            ssr_step(s, e, model) if not averaged else ssr_avg_step(s, e, model)
        inst = ProxInstance(eps, eta, history, g_sum, s.lambda_t, "linear" if averaged else "uniform")
        worst = max(worst, float(np.max(np.abs(prox_oracle(inst) - s.w))))
        count += 1
    assert count == 200
    assert worst < 1e-6
    assert time.perf_counter() - start < 1.0


@pytest.mark.parametrize("t_max", [10, 1000, 10_000])
def test_averaging_identity(backend, rng, t_max):
    d = 3
    w = np.empty(d)
    avg = np.zeros(d)
    weighted = [[] for _ in range(d)]
    for t in range(1, t_max + 1):
        w_t = rng.standard_normal(d)
        kernels.sparsify(w_t, 0.0, 1.0, w, avg, 2.0 / (t + 1))
        for i in range(d):
            weighted[i].append(t * w_t[i])
    direct = np.array([2.0 / (t_max * (t_max + 1)) * math.fsum(col) for col in weighted])
    rel = np.abs(avg - direct) / np.maximum(np.abs(direct), 1e-300)
    assert rel.max() < 1e-10


def test_averaging_identity_on_a_run(rng):
    exs = random_examples(rng, 2000, 3)
    learner = SsrLearner(3, SsrHyperparams(eta=1.0, lam=0.01, epsilon=5.0), SQUARED, Mode.AVERAGED)
    acc = np.zeros(3)
    for t, e in enumerate(exs, 1):
        acc += t * learner.state.w
        learner.step(e)
    t = len(exs) + 1
    acc += t * learner.state.w
    np.testing.assert_allclose(learner.estimate().values, 2.0 / (t * (t + 1)) * acc, rtol=1e-10, atol=1e-14)


def test_zero_gradients_keep_average_zero():
    s = ssr_init(4, SsrHyperparams(eta=1.0, lam=0.1), Mode.AVERAGED)
    for _ in range(20):
        ssr_avg_step(s, Example(np.ones(4), 0.0), SQUARED)
    assert not s.w_avg.any()


def test_huge_lambda_keeps_zero(rng):
    learner = SsrLearner(5, SsrHyperparams(eta=1.0, lam=1e9), SQUARED, instrument=True)
    for e in random_examples(rng, 200, 5):
        assert learner.step(e) == 0.0
    assert learner.zero_checks == learner.checks == 200


@pytest.mark.parametrize("mode", [Mode.STREAMING, Mode.AVERAGED])
def test_support_characterization(backend, rng, mode):
    learner = SsrLearner(30, SsrHyperparams(eta=0.5, lam=0.2, epsilon=1.0), SQUARED, mode, instrument=True)
    wstar = np.zeros(30)
    wstar[:3] = [1.0, -0.5, 0.3]
    for _ in range(500):
        x = rng.standard_normal(30)
        learner.step(Example(x, float(x @ wstar + 0.1 * rng.standard_normal())))
        s = learner.state
        assert np.array_equal(s.w != 0, np.abs(s.theta) > s.lambda_t)
    assert learner.checks == 500


def test_invariant_violation_detected():
    learner = SsrLearner(3, SsrHyperparams(eta=1.0, lam=0.1), SQUARED, instrument=True)
    learner.state.w[1] = 1.0
    with pytest.raises(ssr_mod.InvariantViolation):
        learner.verify()


@pytest.mark.parametrize("mode", [Mode.STREAMING, Mode.AVERAGED])
def test_force_k_caps_support(backend, rng, mode):
    k = 3
    hp = SsrHyperparams(eta=0.5, lam=0.0, epsilon=1.0, schedule=Schedule.force_k(k, 0.05))
    learner = SsrLearner(40, hp, SQUARED, mode, instrument=True)
    prev = learner.state.lambda_t
    for e in random_examples(rng, 300, 40):
        learner.step(e)
        assert learner.state.nnz <= k
        assert learner.state.lambda_t >= prev
        prev = learner.state.lambda_t


def test_state_is_constant_size(rng):
    learner = SsrLearner(10, SsrHyperparams(eta=1.0, lam=0.1), SQUARED, Mode.AVERAGED)
    before = {k: (type(v), getattr(v, "shape", None)) for k, v in vars(learner.state).items()}
    for e in random_examples(rng, 500, 10):
        learner.step(e)
    after = {k: (type(v), getattr(v, "shape", None)) for k, v in vars(learner.state).items()}
    assert before == after
    arrays = [v for v in vars(learner.state).values() if isinstance(v, np.ndarray)]
    assert sorted(a.shape for a in arrays) == [(10,)] * 3
    assert not any(isinstance(v, (list, dict, tuple)) for v in vars(learner.state).values())


class TestPoisoning:
    def test_non_finite_gradient(self):
        s = ssr_init(2, SsrHyperparams(eta=1.0, lam=0.1))
        with pytest.raises(NumericalError):
            ssr_step(s, Example([np.nan, 1.0], 1.0), SQUARED)
        assert s.poisoned
        with pytest.raises(NumericalError):
            ssr_step(s, Example([1.0, 1.0], 1.0), SQUARED)

    def test_zero_curvature_blow_up(self):
        # eps = eta = 0 with lambda below the first gradient: w_2 is unbounded
        s = ssr_init(1, SsrHyperparams(eta=0.0, lam=0.1, epsilon=0.0))
        with pytest.raises(NumericalError):
            ssr_step(s, Example([1.0], 5.0), SQUARED)
        assert s.poisoned

    def test_zero_curvature_under_threshold_is_fine(self):
        s = ssr_init(1, SsrHyperparams(eta=0.0, lam=10.0, epsilon=0.0))
        _, s = ssr_step(s, Example([1.0], 1.0), SQUARED)
        assert s.w.tolist() == [0.0]
