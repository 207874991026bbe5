"""Training the initial model on the initial task, with an on-disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from aoscl import flatio
from aoscl.datastream import InitialData, StreamSpec, generate_initial_dataset
from aoscl.errors import NumericError
from aoscl.numcore import ParamSet, sgd_step
from aoscl.seqmodel import ModelConfig, batch_ce_and_grad, init_params

log = logging.getLogger(__name__)

DATA_DIR_ENV = "AOS_DATA_DIR"


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 30
    alpha: float = 0.05
    final_alpha_ratio: float = 0.1  # learning rate decays linearly to alpha * ratio
    batch_size: int = 8


@dataclass
class Pretrained:
    theta0: ParamSet
    F0: int
    W0: int
    data: InitialData
    losses: list


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "aoscl"))


def cache_key(spec: StreamSpec, model: ModelConfig, cfg: PretrainConfig, seed: int) -> str:
    blob = json.dumps(
        {"stream": list(map(str, spec.initial_key())), "model": asdict(model), "pretrain": asdict(cfg), "seed": seed},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def pretrain(spec: StreamSpec, model: ModelConfig | None = None, cfg: PretrainConfig | None = None,
             seed: int | None = None, use_cache: bool = True) -> Pretrained:
    """Multi-epoch minibatch SGD on the initial task's training split.

    Deterministic in its arguments. With ``use_cache`` the resulting model is
    stored in (and later read from) the data directory.
    """
    model = model or ModelConfig(d_i=spec.d_i, C=spec.vocab)
    cfg = cfg or PretrainConfig()
    seed = spec.seed if seed is None else seed
    data = generate_initial_dataset(spec)
    stem = data_dir() / "theta0" / cache_key(spec, model, cfg, seed)
    if use_cache and stem.with_name(stem.name + ".manifest").exists():
        archive = flatio.read(stem)
        log.info("loaded cached initial model %s", stem)
        return Pretrained(flatio.get_params(archive, "theta."), data.F0, data.W0, data,
                          list(archive.meta.get("losses", [])))

    theta = init_params(model, seed)
    rng = np.random.default_rng([seed, 101])
    n_batches = -(-len(data.train) // cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    losses = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data.train))
        running = 0.0
        for i in range(0, len(order), cfg.batch_size):
            batch = [data.train[j] for j in order[i:i + cfg.batch_size]]
            loss, grad = batch_ce_and_grad(theta, batch, model.c)
            if not np.isfinite(loss):
                raise NumericError(f"pretraining diverged at epoch {epoch}, step {step}: loss={loss}")
            lr = cfg.alpha * (1 - (1 - cfg.final_alpha_ratio) * step / max(total_steps - 1, 1))
            theta = sgd_step(theta, grad, lr)
            running += loss
            step += 1
        losses.append(running / len(data.train))
        log.info("pretrain epoch %d/%d loss %.4f", epoch + 1, cfg.epochs, losses[-1])

    if use_cache:
        archive = flatio.FlatArchive(meta={"F0": data.F0, "W0": data.W0, "losses": losses})
        flatio.add_params(archive, "theta.", theta)
        flatio.write(stem, archive)
    return Pretrained(theta, data.F0, data.W0, data, losses)
