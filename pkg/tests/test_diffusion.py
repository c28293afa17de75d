import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from midframe.diffusion import (
    ddim_step,
    ddim_timesteps,
    ddpm_step,
    linear_schedule,
    predict_z0,
    q_sample,
    schedule_from_echo,
)
from midframe.errors import ConfigError


@pytest.fixture(scope="module")
def default_schedule():
    return linear_schedule(1000, 1e-4, 2e-2)


def test_alpha_bar_terminal_matches_independent_product(default_schedule):
    # independent recomputation: exp of the exact sum of logs
    betas = [1e-4 + (2e-2 - 1e-4) * i / 999 for i in range(1000)]
    expected = math.exp(math.fsum(math.log(1.0 - b) for b in betas))
    got = default_schedule.alpha_bar_at(1000)
    assert got == pytest.approx(expected, rel=1e-3)  # 3 significant figures
    assert got == pytest.approx(4.0e-5, rel=0.05)


def test_schedule_identities(default_schedule):
    s = default_schedule
    for t in (1, 2, 17, 500, 1000):
        assert s.alpha_bar_at(t) == pytest.approx(
            s.alpha_bar_at(t - 1) * s.alpha_at(t), rel=1e-12
        )
    assert s.beta_tilde_at(1) == 0.0
    for t in (2, 3, 100, 1000):
        assert 0.0 < s.beta_tilde_at(t) <= s.beta_at(t)
    assert np.all(np.diff(s.alpha_bar) < 0)
    assert s.alpha_bar_at(1000) < 0.05


def test_single_step_schedule():
    s = linear_schedule(1, beta_start=0.1, beta_end=0.3)
    assert s.beta.tolist() == [0.1]
    assert s.alpha_bar_at(1) == pytest.approx(0.9)


def test_invalid_schedule_ranges():
    with pytest.raises(ConfigError):
        linear_schedule(0)
    with pytest.raises(ConfigError):
        linear_schedule(10, beta_start=0.0)
    with pytest.raises(ConfigError):
        linear_schedule(10, beta_start=0.5, beta_end=0.1)
    with pytest.raises(ConfigError):
        linear_schedule(10, beta_start=0.5, beta_end=1.0)


def test_schedule_echo_round_trip(default_schedule):
    clone = schedule_from_echo(default_schedule.echo())
    assert np.array_equal(clone.beta, default_schedule.beta)


def test_q_sample_zero_noise(default_schedule):
    z0 = np.ones((3, 3))
    t = 400
    out = q_sample(z0, t, np.zeros_like(z0), default_schedule)
    assert out == pytest.approx(math.sqrt(default_schedule.alpha_bar_at(t)) * z0)


def test_q_sample_zero_signal(default_schedule):
    eps = np.full((2, 2), 0.5)
    t = 700
    out = q_sample(np.zeros_like(eps), t, eps, default_schedule)
    assert out == pytest.approx(math.sqrt(1 - default_schedule.alpha_bar_at(t)) * eps)


def test_q_sample_t_out_of_range(default_schedule):
    with pytest.raises(ValueError):
        q_sample(np.zeros(2), 1001, np.zeros(2), default_schedule)
    with pytest.raises(ValueError):
        q_sample(np.zeros(2), 0, np.zeros(2), default_schedule)


def test_q_sample_monte_carlo_moments(default_schedule):
    rng = np.random.default_rng(0)
    t = 500
    n = 100_000
    eps = rng.standard_normal(n)
    samples = q_sample(np.ones(n), t, eps, default_schedule)
    abar = default_schedule.alpha_bar_at(t)
    stderr = math.sqrt((1 - abar) / n)
    assert abs(samples.mean() - math.sqrt(abar)) < 3 * stderr
    assert samples.var() == pytest.approx(1 - abar, rel=0.05)


def test_predict_z0_round_trip(default_schedule):
    rng = np.random.default_rng(1)
    z0 = rng.standard_normal((4, 4))
    eps = rng.standard_normal((4, 4))
    for t in (1, 250, 1000):
        z_t = q_sample(z0, t, eps, default_schedule)
        back = predict_z0(z_t, t, eps, default_schedule)
        assert np.abs(back - z0).max() < 1e-6 * max(1.0, np.abs(z0).max())


def test_predict_z0_zero_eps(default_schedule):
    z_t = np.full((2,), 0.3)
    t = 100
    out = predict_z0(z_t, t, np.zeros(2), default_schedule)
    assert out == pytest.approx(z_t / math.sqrt(default_schedule.alpha_bar_at(t)))


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 1000),
    st.floats(-5, 5, allow_nan=False),
    st.floats(-5, 5, allow_nan=False),
)
def test_round_trip_property(t, z0, eps):
    schedule = linear_schedule(1000, 1e-4, 2e-2)
    z_t = q_sample(np.float64(z0), t, np.float64(eps), schedule)
    assert abs(predict_z0(z_t, t, np.float64(eps), schedule) - z0) < 1e-5


def test_ddpm_terminal_step_is_deterministic(default_schedule):
    rng = np.random.default_rng(2)
    z1 = rng.standard_normal((3,))
    eps = rng.standard_normal((3,))
    a = ddpm_step(z1, 1, eps, rng.standard_normal((3,)), default_schedule)
    b = ddpm_step(z1, 1, eps, rng.standard_normal((3,)), default_schedule)
    assert np.array_equal(a, b)
    alpha = default_schedule.alpha_at(1)
    abar = default_schedule.alpha_bar_at(1)
    mu = (z1 - (1 - alpha) / math.sqrt(1 - abar) * eps) / math.sqrt(alpha)
    assert a == pytest.approx(mu)


def test_ddpm_rejects_t_zero(default_schedule):
    with pytest.raises(ValueError):
        ddpm_step(np.zeros(2), 0, np.zeros(2), np.zeros(2), default_schedule)


def test_ddpm_mean_equals_posterior_mean_form(default_schedule):
    # independent oracle: the abar-weighted posterior mean
    # mu = sqrt(abar_{t-1}) beta_t / (1 - abar_t) * z0_hat
    #    + sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t) * z_t
    rng = np.random.default_rng(3)
    z_t = rng.standard_normal((8,))
    eps = rng.standard_normal((8,))
    for t in (2, 50, 999, 1000):
        got = ddpm_step(z_t, t, eps, np.zeros(8), default_schedule)
        s = default_schedule
        z0_hat = predict_z0(z_t, t, eps, s)
        c0 = math.sqrt(s.alpha_bar_at(t - 1)) * s.beta_at(t) / (1 - s.alpha_bar_at(t))
        ct = math.sqrt(s.alpha_at(t)) * (1 - s.alpha_bar_at(t - 1)) / (1 - s.alpha_bar_at(t))
        expected = c0 * z0_hat + ct * z_t
        rel = np.abs(got - expected).max() / max(np.abs(expected).max(), 1e-12)
        assert rel < 1e-10


def test_ddpm_chain_with_true_noise_recovers_z0(default_schedule):
    # scalar toy problem, 10^4 chains; the oracle predicts the exact noise
    # that relates z_t to z0, so the terminal step collapses onto z0
    rng = np.random.default_rng(4)
    s = linear_schedule(200, 1e-4, 2e-2)
    z0 = 0.7
    n = 10_000
    z = rng.standard_normal(n)
    for t in range(s.timesteps, 0, -1):
        abar = s.alpha_bar_at(t)
        eps_hat = (z - math.sqrt(abar) * z0) / math.sqrt(1 - abar)
        z = ddpm_step(z, t, eps_hat, rng.standard_normal(n), s)
    stderr = z.std() / math.sqrt(n)
    assert abs(z.mean() - z0) < max(3 * stderr, 1e-8)


def test_ddim_step_t_prev_zero_returns_z0_hat(default_schedule):
    rng = np.random.default_rng(5)
    z_t = rng.standard_normal((4,))
    eps = rng.standard_normal((4,))
    t = 600
    out = ddim_step(z_t, t, 0, eps, default_schedule)
    assert np.allclose(out, predict_z0(z_t, t, eps, default_schedule))


def test_ddim_step_lands_on_forward_curve(default_schedule):
    # with the exact eps, a ddim step from t to t_prev equals q_sample at t_prev
    rng = np.random.default_rng(6)
    z0 = rng.standard_normal((5,))
    eps = rng.standard_normal((5,))
    for t, t_prev in ((1000, 800), (800, 1), (37, 12)):
        z_t = q_sample(z0, t, eps, default_schedule)
        stepped = ddim_step(z_t, t, t_prev, eps, default_schedule)
        target = q_sample(z0, t_prev, eps, default_schedule)
        assert np.abs(stepped - target).max() < 1e-12


def test_ddim_step_rejects_bad_order(default_schedule):
    with pytest.raises(ValueError):
        ddim_step(np.zeros(2), 5, 5, np.zeros(2), default_schedule)
    with pytest.raises(ValueError):
        ddim_step(np.zeros(2), 5, 9, np.zeros(2), default_schedule)


def test_ddim_determinism(default_schedule):
    rng = np.random.default_rng(7)
    z_t = rng.standard_normal((3,))
    eps = rng.standard_normal((3,))
    a = ddim_step(z_t, 100, 50, eps, default_schedule)
    b = ddim_step(z_t, 100, 50, eps, default_schedule)
    assert np.array_equal(a, b)


def test_ddim_path_independence_with_oracle_noise(default_schedule):
    # a fixed true eps makes z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps for
    # all t; any timestep partition must land on the same terminal z0
    rng = np.random.default_rng(8)
    z0 = rng.standard_normal((6,))
    eps = rng.standard_normal((6,))
    s = default_schedule
    z_start = q_sample(z0, 1000, eps, s)

    def run(partition):
        z = z_start.copy()
        seq = list(partition) + [0]
        t = 1000
        for t_prev in seq:
            if t_prev >= t:
                continue
            z = ddim_step(z, t, t_prev, eps, s)
            t = t_prev
            if t == 0:
                break
        return z

    partitions = [
        range(999, 0, -1),                       # every step
        range(996, 0, -4),                       # stride 4
        [983, 777, 512, 400, 123, 50, 3],        # irregular
        [500],                                   # two jumps
    ]
    results = [run(p) for p in partitions]
    for r in results[1:]:
        rel = np.abs(r - results[0]).max() / max(np.abs(results[0]).max(), 1e-12)
        assert rel < 1e-6
        assert np.abs(r - z0).max() < 1e-8


def test_ddim_timesteps_full_range():
    assert ddim_timesteps(10, 10) == list(range(10, 0, -1))


def test_ddim_timesteps_stride():
    seq = ddim_timesteps(1000, 200)
    assert len(seq) == 200
    assert seq[0] == 1000
    assert seq[-1] == 5
    assert all(a - b == 5 for a, b in zip(seq, seq[1:]))


def test_ddim_timesteps_single():
    assert ddim_timesteps(1000, 1) == [1000]


def test_ddim_timesteps_rejects_too_many():
    with pytest.raises(ValueError):
        ddim_timesteps(10, 11)
