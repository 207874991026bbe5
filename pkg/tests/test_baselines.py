import numpy as np
import pytest

from aoscl.aos import AosConfig, AosState, aos_step
from aoscl.baselines import (
    EwcState,
    ExperienceReplay,
    FineTune,
    Memory,
    OnlineEWC,
    OnlineGEM,
    UpdateOnlyEncoder,
    diagonal_fisher,
    er_step,
    ewc_penalty,
    ewc_penalty_grad,
    ewc_step,
    ft_step,
    prefilled_memory,
    project_gradient,
    reservoir_offer,
    uoe_mask,
)
from aoscl.datastream import LearnerBatch
from aoscl.numcore import DECODER, ENCODER, ParamSet, dot, finite_diff_grad
from aoscl.seqmodel import ce_loss_and_grad, init_params
from tests.conftest import SMALL, random_sample
from tests.helpers import rel_err


def batch_of(samples):
    return LearnerBatch(tuple(samples), sum(s.n_frames for s in samples), sum(s.n_tokens for s in samples))


def flat_params(vec):
    return ParamSet({"w": np.asarray(vec, dtype=float)}, {"w": ENCODER})


# ---------------------------------------------------------------- reservoir


def test_reservoir_inclusion_is_uniform():
    M, n, trials = 10, 100, 10_000
    counts = np.zeros(n)
    rng = np.random.default_rng(2024)
    for _ in range(trials):
        mem = Memory(M)
        for i in range(n):
            reservoir_offer(mem, i, rng)
        assert len(mem) == M and mem.n_seen == n
        counts[mem.slots] += 1
    p = M / n
    sigma = np.sqrt(p * (1 - p) / trials)
    assert np.all(np.abs(counts / trials - p) <= 3 * sigma + 1e-12), np.max(np.abs(counts / trials - p)) / sigma


def test_reservoir_fills_then_caps(rng):
    mem = Memory(3)
    for i in range(3):
        reservoir_offer(mem, i, rng)
    assert mem.slots == [0, 1, 2]
    for i in range(3, 50):
        reservoir_offer(mem, i, rng)
        assert len(mem) == 3
    empty = Memory(0)
    reservoir_offer(empty, 1, rng)
    assert len(empty) == 0 and empty.n_seen == 1
    with pytest.raises(ValueError):
        Memory(-1)


def test_memory_sample_sizes(rng):
    mem = prefilled_memory(5, range(5), rng)
    assert len(mem.sample(8, rng)) == 5
    assert len(set(mem.sample(3, rng))) == 3
    assert Memory(4).sample(8, rng) == []


# ---------------------------------------------------------------- O-GEM


def test_projection_on_random_pairs():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        d = int(rng.integers(1, 20))
        g, ref = flat_params(rng.normal(size=d)), flat_params(rng.normal(size=d))
        out = project_gradient(g, ref)
        assert dot(out, ref) >= -1e-12
        if dot(g, ref) >= 0:
            assert out is g or out.equal(g)


def test_projection_zero_reference():
    g = flat_params([1.0, -2.0])
    assert project_gradient(g, flat_params([0.0, 0.0])).equal(g)


def test_projection_example():
    out = project_gradient(flat_params([1.0, -1.0]), flat_params([0.0, 1.0]))
    np.testing.assert_allclose(out["w"], [1.0, 0.0], atol=1e-15)


# ---------------------------------------------------------------- FT / ER / UOE


def test_er_with_empty_memory_equals_ft(rng):
    theta = init_params(SMALL, 0)
    b = batch_of([random_sample(rng) for _ in range(2)])
    mem = Memory(10)
    out = er_step(theta, b, 0.01, mem, np.random.default_rng(0))
    assert out.equal(ft_step(theta, b, 0.01))
    assert len(mem) == 2


def test_er_weight_zero_equals_ft(rng):
    theta = init_params(SMALL, 0)
    mem = prefilled_memory(5, [random_sample(rng) for _ in range(5)], rng)
    b = batch_of([random_sample(rng)])
    assert er_step(theta, b, 0.01, mem, rng, weight_er=0.0).equal(ft_step(theta, b, 0.01))


def test_er_uses_memory_gradient(rng):
    theta = init_params(SMALL, 0)
    mem = prefilled_memory(5, [random_sample(rng) for _ in range(5)], rng)
    b = batch_of([random_sample(rng)])
    assert not er_step(theta, b, 0.01, mem, rng).equal(ft_step(theta, b, 0.01))


def test_uoe_mask_and_freeze(rng):
    theta = init_params(SMALL, 0)
    mask = uoe_mask(theta)
    for k in theta:
        assert mask[k] == (theta.group(k) == ENCODER and not theta.is_norm(k))
    learner = UpdateOnlyEncoder(theta, 10, 5)
    for _ in range(3):
        learner.step(batch_of([random_sample(rng)]))
    for k in theta:
        if theta.group(k) == DECODER or theta.is_norm(k):
            assert np.array_equal(learner.params[k], theta[k]), k
    assert any(not np.array_equal(learner.params[k], theta[k]) for k in theta if mask[k])


def test_ft_equals_aos_without_kd_bit_exact(rng):
    # with lambda=0 the adapted model of AOS is plain fine-tuning
    theta = init_params(SMALL, 0)
    ft = FineTune(theta, 100, 20)
    state = AosState.initial(theta, 100, 20)
    for _ in range(4):
        b = batch_of([random_sample(rng) for _ in range(2)])
        ft.step(b)
        state = aos_step(state, b, AosConfig(lam=0.0))
        assert ft.params.equal(state.adapted)
    assert ft.counters == (state.F_seen, state.W_seen)


def test_replay_learners_prefill_and_grow(rng):
    theta = init_params(SMALL, 0)
    initial = [random_sample(rng) for _ in range(4)]
    for cls in (ExperienceReplay, OnlineGEM):
        learner = cls(theta, 10, 5, memory_size=6, initial_samples=initial)
        assert len(learner.memory) == 4
        learner.step(batch_of([random_sample(rng) for _ in range(3)]))
        assert len(learner.memory) == 6 and learner.memory.n_seen == 7


# ---------------------------------------------------------------- EWC


def test_ewc_penalty_example():
    theta = flat_params([1.0, 2.0])
    state = EwcState(anchor=flat_params([0.0, 1.0]), fisher=flat_params([2.0, 3.0]), lambda_ewc=1.0)
    # 0.5 * (2 * 1 + 3 * 1)
    assert ewc_penalty(theta, state) == 2.5


def test_ewc_penalty_gradient_matches_finite_differences(rng):
    theta = init_params(SMALL, 0)
    state = EwcState(anchor=init_params(SMALL, 1), fisher=init_params(SMALL, 2).map(np.abs), lambda_ewc=3.0)
    fd = finite_diff_grad(lambda p: ewc_penalty(p, state), theta)
    assert rel_err(ewc_penalty_grad(theta, state).flat(), fd.flat()) < 1e-6


def test_ewc_zero_lambda_is_ft(rng):
    theta = init_params(SMALL, 0)
    state = EwcState(anchor=theta.copy(), fisher=theta.map(np.ones_like), lambda_ewc=0.0)
    b = batch_of([random_sample(rng)])
    assert ewc_step(theta, state, b, 0.01).equal(ft_step(theta, b, 0.01))


def test_ewc_refresh_folds_fisher_and_moves_anchor(rng):
    theta = init_params(SMALL, 0)
    samples = [random_sample(rng) for _ in range(3)]
    fisher0 = diagonal_fisher(theta, samples)
    assert all(np.all(v >= 0) for v in fisher0.values())
    learner = OnlineEWC(theta, 10, 5, samples, refresh_every=2, gamma=0.5)
    b1, b2 = batch_of([random_sample(rng)]), batch_of([random_sample(rng), random_sample(rng)])
    learner.step(b1)
    assert learner.ewc.anchor.equal(theta)
    mid = learner.params
    learner.step(b2)
    assert learner.ewc.anchor.equal(learner.params)
    # the folded fisher mixes the old one with the mean squared per-utterance gradients
    sq = [ce_loss_and_grad(theta, b1.samples[0], 0.3)[1]] + [ce_loss_and_grad(mid, s, 0.3)[1] for s in b2.samples]
    for k in theta:
        fresh_k = sum(g[k] ** 2 for g in sq) / 3
        np.testing.assert_allclose(learner.ewc.fisher[k], 0.5 * fisher0[k] + 0.5 * fresh_k, rtol=1e-12, atol=1e-15)
