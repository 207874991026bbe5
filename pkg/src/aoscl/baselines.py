"""Comparison learners: FT, ER, O-GEM, UOE and online EWC, plus a reservoir memory.

Every learner exposes ``step(batch)`` for one learner-facing batch and
``params`` for the current inference model, so the harness can drive any of
them the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aoscl.numcore import ENCODER, Grad, ParamSet, axpy_combine, dot, group_mask, sgd_step
from aoscl.seqmodel import batch_ce_and_grad, ce_loss_and_grad


# ---------------------------------------------------------------- memory


@dataclass
class Memory:
    capacity: int
    slots: list = field(default_factory=list)
    n_seen: int = 0

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("memory capacity must be >= 0")

    def __len__(self):
        return len(self.slots)

    def sample(self, k: int, rng) -> list:
        """``min(k, len)`` distinct slots drawn uniformly."""
        k = min(k, len(self.slots))
        if k == 0:
            return []
        idx = rng.choice(len(self.slots), size=k, replace=False)
        return [self.slots[i] for i in idx]


def reservoir_offer(mem: Memory, item, rng) -> Memory:
    """Classic reservoir sampling (in place; the memory is also returned)."""
    if mem.n_seen < mem.capacity:
        mem.slots.append(item)
    elif mem.capacity > 0:
        j = int(rng.integers(0, mem.n_seen + 1))
        if j < mem.capacity:
            mem.slots[j] = item
    mem.n_seen += 1
    return mem


def prefilled_memory(capacity: int, samples, rng) -> Memory:
    """Reservoir that has already been offered ``samples`` (the initial task's data)."""
    mem = Memory(capacity)
    for s in samples:
        reservoir_offer(mem, s, rng)
    return mem


# ---------------------------------------------------------------- shared plumbing


class _Learner:
    name = "base"

    def __init__(self, theta0: ParamSet, F0: int, W0: int, alpha: float = 0.01, c: float = 0.3):
        if not alpha > 0:
            raise ValueError("learning rate must be positive")
        self.theta = theta0.copy()
        self.alpha = alpha
        self.c = c
        self.F_seen = F0
        self.W_seen = W0

    @property
    def params(self) -> ParamSet:
        return self.theta

    @property
    def counters(self) -> tuple:
        return self.F_seen, self.W_seen

    def step(self, batch) -> None:
        if not batch.samples:
            raise ValueError("empty batch")
        self.theta = self._update(batch)
        self.F_seen += batch.F
        self.W_seen += batch.W

    def _update(self, batch) -> ParamSet:
        raise NotImplementedError


def ft_step(theta: ParamSet, batch, alpha: float, c: float = 0.3, mask=None) -> ParamSet:
    _, g = batch_ce_and_grad(theta, batch.samples, c)
    return sgd_step(theta, g, alpha, mask)


class FineTune(_Learner):
    """Plain SGD on the stream, no regularization."""

    name = "ft"

    def _update(self, batch):
        return ft_step(self.theta, batch, self.alpha, self.c)


# ---------------------------------------------------------------- replay


def er_step(theta: ParamSet, batch, alpha: float, memory: Memory, rng, weight_er: float = 1.0, c: float = 0.3) -> ParamSet:
    """Joint step on the new batch and a memory batch, then offer the new samples."""
    replay = memory.sample(len(batch.samples), rng)
    _, g = batch_ce_and_grad(theta, batch.samples, c)
    if replay and weight_er != 0:
        _, g_mem = batch_ce_and_grad(theta, replay, c)
        g = axpy_combine(1.0, g, weight_er, g_mem)
    out = sgd_step(theta, g, alpha)
    for s in batch.samples:
        reservoir_offer(memory, s, rng)
    return out


class ExperienceReplay(_Learner):
    name = "er"

    def __init__(self, theta0, F0, W0, alpha=0.01, c=0.3, memory_size=200, weight_er=1.0, seed=0, initial_samples=()):
        super().__init__(theta0, F0, W0, alpha, c)
        self.weight_er = weight_er
        self.rng = np.random.default_rng([seed, 17])
        self.memory = prefilled_memory(memory_size, initial_samples, self.rng)

    def _update(self, batch):
        return er_step(self.theta, batch, self.alpha, self.memory, self.rng, self.weight_er, self.c)


def project_gradient(g: Grad, g_ref: Grad) -> Grad:
    """Single-constraint GEM projection.

    If ``g`` conflicts with ``g_ref`` (negative inner product) the conflicting
    component is removed; otherwise ``g`` is returned untouched. A zero
    reference gradient imposes no constraint.
    """
    d = dot(g, g_ref)
    if d >= 0:
        return g
    ref_sq = dot(g_ref, g_ref)
    if ref_sq == 0:
        return g
    return axpy_combine(1.0, g, -d / ref_sq, g_ref)


def ogem_step(theta: ParamSet, batch, alpha: float, memory: Memory, rng, c: float = 0.3) -> ParamSet:
    replay = memory.sample(len(batch.samples), rng)
    _, g = batch_ce_and_grad(theta, batch.samples, c)
    if replay:
        _, g_ref = batch_ce_and_grad(theta, replay, c)
        g = project_gradient(g, g_ref)
    out = sgd_step(theta, g, alpha)
    for s in batch.samples:
        reservoir_offer(memory, s, rng)
    return out


class OnlineGEM(_Learner):
    name = "ogem"

    def __init__(self, theta0, F0, W0, alpha=0.01, c=0.3, memory_size=200, seed=0, initial_samples=()):
        super().__init__(theta0, F0, W0, alpha, c)
        self.rng = np.random.default_rng([seed, 23])
        self.memory = prefilled_memory(memory_size, initial_samples, self.rng)

    def _update(self, batch):
        return ogem_step(self.theta, batch, self.alpha, self.memory, self.rng, self.c)


# ---------------------------------------------------------------- freezing


def uoe_mask(theta: ParamSet) -> dict:
    """Trainable entries: encoder group minus normalization parameters."""
    return group_mask(theta, ENCODER, include_norm=False)


class UpdateOnlyEncoder(_Learner):
    name = "uoe"

    def __init__(self, theta0, F0, W0, alpha=0.01, c=0.3):
        super().__init__(theta0, F0, W0, alpha, c)
        self.mask = uoe_mask(theta0)

    def _update(self, batch):
        return ft_step(self.theta, batch, self.alpha, self.c, mask=self.mask)


# ---------------------------------------------------------------- EWC


@dataclass
class EwcState:
    anchor: ParamSet
    fisher: ParamSet
    gamma: float = 0.95
    lambda_ewc: float = 100.0
    refresh_every: int = 50
    pending: ParamSet | None = None  # running sum of squared per-utterance gradients
    pending_count: int = 0
    steps: int = 0


def ewc_penalty(theta: ParamSet, state: EwcState) -> float:
    """``(lambda/2) * sum fisher * (theta - anchor)^2``."""
    return 0.5 * state.lambda_ewc * sum(
        float(np.sum(state.fisher[k] * (theta[k] - state.anchor[k]) ** 2)) for k in theta
    )


def ewc_penalty_grad(theta: ParamSet, state: EwcState) -> Grad:
    return theta.like({k: state.lambda_ewc * state.fisher[k] * (theta[k] - state.anchor[k]) for k in theta})


def diagonal_fisher(theta: ParamSet, samples, c: float = 0.3) -> ParamSet:
    """Empirical diagonal Fisher: mean over samples of the squared loss gradient."""
    if not samples:
        raise ValueError("need at least one sample")
    acc = theta.zeros_like()
    for s in samples:
        _, g = ce_loss_and_grad(theta, s, c)
        acc = acc.like({k: acc[k] + g[k] ** 2 for k in acc})
    return acc.map(lambda v: v / len(samples))


def ewc_step(theta: ParamSet, state: EwcState, batch, alpha: float, c: float = 0.3) -> ParamSet:
    """One penalized SGD step; every ``refresh_every`` steps fold the new Fisher in and move the anchor."""
    grads = [ce_loss_and_grad(theta, s, c)[1] for s in batch.samples]
    g = grads[0]
    for gi in grads[1:]:
        g = g.like({k: g[k] + gi[k] for k in g})
    sq = theta.like({k: sum(gi[k] ** 2 for gi in grads) for k in theta})
    state.pending = sq if state.pending is None else state.pending.like({k: state.pending[k] + sq[k] for k in sq})
    state.pending_count += len(grads)
    g = axpy_combine(1.0, g, 1.0, ewc_penalty_grad(theta, state))
    out = sgd_step(theta, g, alpha)
    state.steps += 1
    if state.steps % state.refresh_every == 0:
        fresh = state.pending.map(lambda v: v / state.pending_count)
        state.fisher = axpy_combine(state.gamma, state.fisher, 1 - state.gamma, fresh)
        state.anchor = out.copy()
        state.pending, state.pending_count = None, 0
    return out


class OnlineEWC(_Learner):
    name = "ewc"

    def __init__(self, theta0, F0, W0, fisher_samples, alpha=0.01, c=0.3,
                 lambda_ewc=100.0, gamma=0.95, refresh_every=50):
        super().__init__(theta0, F0, W0, alpha, c)
        self.ewc = EwcState(
            anchor=theta0.copy(),
            fisher=diagonal_fisher(theta0, fisher_samples, c),
            gamma=gamma,
            lambda_ewc=lambda_ewc,
            refresh_every=refresh_every,
        )

    def _update(self, batch):
        return ewc_step(self.theta, self.ewc, batch, self.alpha, self.c)
