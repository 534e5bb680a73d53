import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smctune.errors import ConfigError, DegenerateCloudError
from smctune.kernels import MassMatrix, MoveOutcome, ScaleParams
from smctune.models import TemperedTarget, build_gaussian_shift_model
from smctune.smc import (ParticleCloud, SamplerConfig, adaptive_move, ess, lag_correlation,
                         multinomial_indices, next_temperature, resample, reweight, run_sampler,
                         systematic_indices, update_mass_matrix)

from conftest import gaussian_target


def _cloud(x, log_w=None, ll=None):
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    n = x.shape[0]
    log_w = np.zeros(n) if log_w is None else np.asarray(log_w, dtype=float)
    ll = np.zeros(n) if ll is None else np.asarray(ll, dtype=float)
    return ParticleCloud(x, log_w, ll, np.zeros(n), False)


def _strip(records):
    return [{k: v for k, v in r.items() if k != "wall_time"} for r in records]


# -- weights and temperatures ---------------------------------------------

def test_ess_examples():
    assert ess(np.zeros(4)) == pytest.approx(4.0)
    assert ess(np.array([0.0, -np.inf, -np.inf, -np.inf])) == pytest.approx(1.0)
    assert ess(np.log([2.0, 1.0, 1.0])) == pytest.approx(16 / 6)
    with pytest.raises(DegenerateCloudError, match="degenerate cloud"):
        ess(np.full(3, -np.inf))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30), st.floats(-100, 100))
def test_ess_bounds_and_shift_invariance(lw, c):
    lw = np.array(lw)
    e = ess(lw)
    assert 1 - 1e-9 <= e <= lw.size + 1e-9
    assert ess(lw + c) == pytest.approx(e, rel=1e-9)


def test_next_temperature_closed_form():
    lam = next_temperature(np.array([0.0, np.log(0.01)]), 0.0, 0.75, 2)
    assert lam == pytest.approx(np.log(2 - np.sqrt(3)) / np.log(0.01), abs=1e-6)
    assert lam == pytest.approx(0.2860, abs=1e-4)


def test_next_temperature_endpoints():
    assert next_temperature(np.full(10, -3.0), 0.0, 0.5) == 1.0
    ll = np.random.default_rng(0).normal(size=100)
    assert next_temperature(ll, 0.999, 0.1) == 1.0


@given(c=st.floats(-1e3, 1e3), lam_prev=st.floats(0, 0.9))
@settings(max_examples=40, deadline=None)
def test_next_temperature_shift_invariant(c, lam_prev):
    ll = np.random.default_rng(1).normal(scale=20, size=64)
    a = next_temperature(ll, lam_prev, 0.5)
    b = next_temperature(ll + c, lam_prev, 0.5)
    assert b == pytest.approx(a, abs=1e-8)
    assert lam_prev < a <= 1.0


def test_next_temperature_hits_target_ess():
    ll = np.random.default_rng(2).normal(scale=30, size=500)
    lam = next_temperature(ll, 0.2, 0.9)
    assert ess((lam - 0.2) * ll) == pytest.approx(0.9 * 500, rel=1e-6)


def test_reweight_examples():
    cloud = _cloud(np.zeros(3), ll=np.full(3, -2.5))
    _, inc = reweight(cloud, 0.2, 0.6)
    assert inc == pytest.approx(-2.5 * 0.4)
    cloud = _cloud(np.zeros(2), ll=[0.0, -1.0])
    lw, inc = reweight(cloud, 0.0, 0.5)
    assert inc == pytest.approx(np.log((1 + np.exp(-0.5)) / 2), abs=1e-12)
    assert inc == pytest.approx(-0.219070, abs=1e-6)
    np.testing.assert_allclose(lw, [0.0, -0.5])
    with pytest.raises(ValueError):
        reweight(cloud, 0.5, 0.5)


def test_reweight_uses_current_weights():
    cloud = _cloud(np.zeros(2), log_w=np.log([0.9, 0.1]), ll=[0.0, -1.0])
    _, inc = reweight(cloud, 0.0, 1.0)
    assert inc == pytest.approx(np.log(0.9 + 0.1 * np.exp(-1.0)))


# -- resampling ------------------------------------------------------------

def test_systematic_equal_weights_is_identity():
    idx = systematic_indices(np.full(8, 1 / 8), np.random.default_rng(0))
    np.testing.assert_array_equal(idx, np.arange(8))


def test_resample_degenerate_and_reset():
    cloud = _cloud([[1.0], [2.0]], log_w=[0.0, -np.inf], ll=[-1.0, -2.0])
    for scheme in ("systematic", "multinomial"):
        out = resample(cloud, np.random.default_rng(0), scheme)
        np.testing.assert_array_equal(out.positions[:, 0], [1.0, 1.0])
        np.testing.assert_array_equal(out.cached_loglik, [-1.0, -1.0])
        np.testing.assert_array_equal(out.log_weights, 0.0)
        assert out.resampled
    with pytest.raises(DegenerateCloudError):
        resample(_cloud([[1.0], [2.0]], log_w=[-np.inf, -np.inf]), np.random.default_rng(0))


@pytest.mark.parametrize("sampler", [systematic_indices, multinomial_indices])
def test_resampling_offspring_means(sampler):
    w = np.array([0.75, 0.25])
    rng = np.random.default_rng(1)
    trials = 100_000
    counts = np.array([np.bincount(sampler(np.repeat(w / 2, 2), rng) // 2, minlength=2)
                       for _ in range(trials)])
    mean = counts.mean(0)
    se = counts.std(0) / np.sqrt(trials) + 1e-12
    assert np.all(np.abs(mean - [3.0, 1.0]) <= 3 * se + 1e-12)


def test_systematic_offspring_counts_are_tight():
    w = np.random.default_rng(2).dirichlet(np.ones(50))
    counts = np.bincount(systematic_indices(w, np.random.default_rng(3)), minlength=50)
    assert np.all(np.abs(counts - 50 * w) < 1)


# -- mass matrix and correlations ------------------------------------------

def test_mass_examples():
    x = np.array([[2.0, 1.0], [-2.0, -1.0]])
    np.testing.assert_allclose(update_mass_matrix(_cloud(x)).diag, [0.25, 1.0])
    m = update_mass_matrix(_cloud(np.ones((5, 3))))
    assert np.all(np.isfinite(m.diag)) and np.all(m.diag > 0)
    sd = np.array([0.5, 1.0, 3.0])
    x = np.random.default_rng(4).standard_normal((100_000, 3)) * sd
    np.testing.assert_allclose(update_mass_matrix(_cloud(x)).diag, 1 / sd**2, rtol=0.05)


def test_lag_correlation_constant_column_counts_as_unmixed():
    a = np.column_stack([np.arange(5.0), np.ones(5)])
    np.testing.assert_allclose(lag_correlation(a, a), [1.0, 1.0])
    np.testing.assert_allclose(lag_correlation(a, -a)[0], -1.0)


# -- adaptive move ---------------------------------------------------------

def _independent(x, params, lam, target, mass, rng):
    y = rng.standard_normal(x.shape)
    z = np.zeros(x.shape[0])
    return MoveOutcome(y, y, z, np.ones(x.shape[0], bool), z, z, z)


def _identity(x, params, lam, target, mass, rng):
    z = np.zeros(x.shape[0])
    return MoveOutcome(x, x, z, np.zeros(x.shape[0], bool), z, z, z)


def test_adaptive_move_independent_sampler_stops_at_once():
    x = np.random.default_rng(5).standard_normal((4096, 3))
    _, rep = adaptive_move(_cloud(x), _independent, None, 1.0, None, MassMatrix.identity(3),
                           np.random.default_rng)
    assert rep.steps == 1 and not rep.max_steps_hit


def test_adaptive_move_identity_hits_cap(caplog):
    x = np.random.default_rng(6).standard_normal((64, 3))
    _, rep = adaptive_move(_cloud(x), _identity, None, 1.0, None, MassMatrix.identity(3),
                           np.random.default_rng, max_steps=7)
    assert rep.steps == 7 and rep.max_steps_hit
    assert "cap" in caplog.text


def test_adaptive_move_alpha_prime_one_stops_at_once():
    x = np.random.default_rng(7).standard_normal((64, 3))
    _, rep = adaptive_move(_cloud(x), _identity, None, 1.0, None, MassMatrix.identity(3),
                           np.random.default_rng, alpha_prime=1.0)
    assert rep.steps == 1


def test_adaptive_move_fixed_steps_and_cache():
    t = gaussian_target(2, lik_mean=np.array([1.0, 1.0]), lik_var=1.0)
    x = np.random.default_rng(8).standard_normal((200, 2))
    lp, ll = t.evaluate(x)
    cloud = ParticleCloud(x, np.zeros(200), ll, lp, True)
    moved, rep = adaptive_move(cloud, "rw", ScaleParams(np.full(200, 0.8)), 0.5, t,
                               MassMatrix.identity(2), np.random.default_rng, fixed_steps=4,
                               keep_sweeps=True)
    assert rep.steps == 4 and len(rep.sweeps) == 4
    lp2, ll2 = t.evaluate(moved.positions)
    np.testing.assert_array_equal(moved.cached_loglik, ll2)
    np.testing.assert_array_equal(moved.cached_logprior, lp2)


# -- full runs -------------------------------------------------------------

def test_trivial_ladder():
    d = 2
    prior = gaussian_target(d)
    t = TemperedTarget(d, prior.log_prior, lambda x: np.full(x.shape[0], -1.7), prior.grad_log_prior,
                       lambda x: np.zeros_like(x), prior.prior_sampler)
    tr = run_sampler(SamplerConfig(model={"name": "const"}, N=64, final_move=False), t)
    assert tr.lambdas == [0.0, 1.0]
    assert tr.log_z == pytest.approx(-1.7)


def test_gaussian_run_and_determinism():
    t = build_gaussian_shift_model(2)
    cfg = SamplerConfig(model={"name": "gaussian", "dim": 2}, N=1024, seed=11)
    a = run_sampler(cfg, t)
    b = run_sampler(cfg, t)
    assert abs(a.log_z) < 0.2
    assert ess(a.final_cloud.log_weights) > 0
    assert _strip(a.records) == _strip(b.records)
    np.testing.assert_array_equal(a.final_cloud.positions, b.final_cloud.positions)
    assert (a.grad_evals, a.lik_evals) == (b.grad_evals, b.lik_evals)
    # cache coherence and counters
    np.testing.assert_allclose(a.final_cloud.cached_loglik, t.log_likelihood(a.final_cloud.positions))
    assert a.grad_evals == t.grad_evals and a.lik_evals == t.lik_evals
    lams = a.lambdas
    assert lams[0] == 0.0 and lams[-1] == 1.0 and np.all(np.diff(lams) > 0)


@pytest.mark.parametrize("kernel,tuner", [("mala", "ft"), ("rw", "pr"), ("hmc", "fixed")])
def test_other_samplers_run(kernel, tuner):
    t = build_gaussian_shift_model(2)
    tr = run_sampler(SamplerConfig(kernel=kernel, tuner=tuner, N=256, seed=3), t)
    assert np.isfinite(tr.log_z) and abs(tr.log_z) < 0.5
    if kernel == "rw":
        assert tr.grad_evals == 0


def test_fixed_ladder_and_moves():
    t = build_gaussian_shift_model(2)
    cfg = SamplerConfig(N=128, fixed_ladder=[0.0, 0.25, 0.5, 1.0], fixed_move_steps=2, seed=4,
                        final_move=False)
    tr = run_sampler(cfg, t)
    assert tr.lambdas == [0.0, 0.25, 0.5, 1.0]
    assert [r["move_steps"] for r in tr.records if r["phase"] == "step"] == [2, 2]


def test_errors_carry_step_context():
    prior = gaussian_target(1)
    calls = {"n": 0}

    def lik(x):
        calls["n"] += 1
        if calls["n"] > 3:
            return np.full(x.shape[0], np.nan)
        return -0.5 * x[:, 0] ** 2

    t = TemperedTarget(1, prior.log_prior, lik, prior.grad_log_prior, lambda x: -x,
                       prior.prior_sampler)
    with pytest.raises(Exception, match="step"):
        run_sampler(SamplerConfig(model={"name": "x"}, N=64, alpha=0.99, tuner="fixed"), t)


@pytest.mark.parametrize("field,value", [
    ("kernel", "nuts"), ("tuner", "x"), ("N", 1), ("alpha", 1.0), ("alpha_prime", 0.0),
    ("max_move_steps", 0), ("resampling", "stratified"), ("fixed_ladder", [0.0, 0.7, 0.5, 1.0]),
    ("fixed_move_steps", 0), ("tuning", {"bogus": 1}),
])
def test_config_validation_names_the_field(field, value):
    with pytest.raises(ConfigError, match=field.split("_")[0]):
        SamplerConfig(**{field: value})


def test_config_round_trip():
    cfg = SamplerConfig(kernel="mala", tuner="ft", N=32, seed=9)
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        SamplerConfig.from_dict({"bogus": 1})
