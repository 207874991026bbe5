"""Averaging for online continual learning (AOS).

Two models are kept. The *adapted* model is trained by SGD on every incoming
batch with a knowledge-distillation term pulling it towards the *final*
model's outputs. After each step the final model moves towards the adapted
one by a weighted average whose weight is the batch's share of all data seen
so far: frames for encoder parameters, output tokens for decoder parameters,
each inflated by a plasticity factor. Only the final model is used for
inference.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from aoscl import flatio
from aoscl.errors import SpecError
from aoscl.numcore import DECODER, ParamSet, check_finite, sgd_step
from aoscl.seqmodel import batch_total_and_grad


@dataclass(frozen=True)
class AosConfig:
    tau: float = 1.0
    tau2: float = 1.0
    lam: float = 0.1
    alpha: float = 0.01
    c: float = 0.3

    def __post_init__(self):
        if self.tau < 1 or self.tau2 < 1:
            raise SpecError("plasticity factors tau and tau2 must be >= 1")
        if not 0 <= self.lam <= 1:
            raise SpecError("KD weight must lie in [0, 1]")
        if not self.alpha > 0:
            raise SpecError("learning rate must be positive")
        if not 0 <= self.c <= 1:
            raise SpecError("CTC weight must lie in [0, 1]")

    @property
    def triple(self) -> tuple:
        return (self.tau, self.lam, self.tau2)


def aos_default_config() -> AosConfig:
    return AosConfig(tau=1.0, lam=0.1, tau2=1.0, alpha=0.01, c=0.3)


AOS_PRESETS = {
    "default": aos_default_config(),
    # plasticity tuned on the test experiment: encoder averaged more progressively
    "optimized": replace(aos_default_config(), tau=2.0),
}


def eta_enc(F: float, F_seen: float, tau: float) -> float:
    """Averaging weight of the adapted encoder: ``tau*F / (F_seen + tau*F)``."""
    if not F > 0:
        raise ValueError(f"batch frame count must be positive, got {F}")
    if F_seen < 0:
        raise ValueError("seen-frame count must be non-negative")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    return tau * F / (F_seen + tau * F)


def eta_dec(W: float, W_seen: float, tau2: float) -> float:
    """Averaging weight of the adapted decoder: ``tau2*W / (W_seen + tau2*W)``."""
    return eta_enc(W, W_seen, tau2)


@dataclass(frozen=True)
class AosState:
    final: ParamSet
    adapted: ParamSet
    F_seen: int
    W_seen: int
    step: int = 0

    @classmethod
    def initial(cls, theta0: ParamSet, F0: int, W0: int) -> AosState:
        return cls(final=theta0.copy(), adapted=theta0.copy(), F_seen=F0, W_seen=W0, step=0)


def average(final: ParamSet, adapted: ParamSet, eta_e: float, eta_d: float) -> ParamSet:
    """``(1 - eta) * final + eta * adapted`` with ``eta_d`` on decoder entries, ``eta_e`` elsewhere."""
    final.check_compatible(adapted)
    out = {}
    for k in final:
        eta = eta_d if final.group(k) == DECODER else eta_e
        if eta == 1:
            out[k] = adapted[k].copy()
        else:
            out[k] = (1 - eta) * final[k] + eta * adapted[k]
    return final.like(out)


def aos_step(state: AosState, batch, config: AosConfig) -> AosState:
    """Process one batch; ``state`` itself is never modified."""
    samples = batch.samples
    if not samples:
        raise ValueError("empty batch")
    _, grad = batch_total_and_grad(state.adapted, state.final, samples, config.c, config.lam)
    adapted = sgd_step(state.adapted, grad, config.alpha)
    e_enc = eta_enc(batch.F, state.F_seen, config.tau)
    e_dec = eta_dec(batch.W, state.W_seen, config.tau2)
    final = average(state.final, adapted, e_enc, e_dec)
    check_finite(final, "averaged parameters")
    return AosState(
        final=final,
        adapted=adapted,
        F_seen=state.F_seen + batch.F,
        W_seen=state.W_seen + batch.W,
        step=state.step + 1,
    )


class AosLearner:
    name = "aos"

    def __init__(self, theta0: ParamSet, F0: int, W0: int, config: AosConfig | None = None):
        self.config = config or aos_default_config()
        self.state = AosState.initial(theta0, F0, W0)

    def step(self, batch) -> None:
        self.state = aos_step(self.state, batch, self.config)

    @property
    def params(self) -> ParamSet:
        return self.state.final

    @property
    def counters(self) -> tuple:
        return self.state.F_seen, self.state.W_seen


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(stem, state: AosState, config: AosConfig | None = None) -> None:
    archive = flatio.FlatArchive(meta={"F_seen": int(state.F_seen), "W_seen": int(state.W_seen), "step": state.step})
    if config is not None:
        archive.meta["config"] = {"tau": config.tau, "tau2": config.tau2, "lam": config.lam, "alpha": config.alpha, "c": config.c}
    flatio.add_params(archive, "final.", state.final)
    flatio.add_params(archive, "adapted.", state.adapted)
    flatio.write(stem, archive)


def load_checkpoint(stem) -> AosState:
    archive = flatio.read(stem)
    return AosState(
        final=flatio.get_params(archive, "final."),
        adapted=flatio.get_params(archive, "adapted."),
        F_seen=int(archive.meta["F_seen"]),
        W_seen=int(archive.meta["W_seen"]),
        step=int(archive.meta["step"]),
    )

