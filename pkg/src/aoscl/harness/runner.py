"""One online pass of a learner over a stream, with periodic evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from aoscl import metrics
from aoscl.aos import AosConfig, AosLearner, save_checkpoint
from aoscl.baselines import ExperienceReplay, FineTune, OnlineEWC, OnlineGEM, UpdateOnlyEncoder
from aoscl.datastream import StreamSpec, eval_sets, generate_stream, preset
from aoscl.errors import NumericError, SpecError
from aoscl.harness.pretrain import PretrainConfig, Pretrained, pretrain
from aoscl.seqmodel import ModelConfig

log = logging.getLogger(__name__)

METHODS = ("aos", "ft", "er", "ogem", "uoe", "ewc")
_METHOD_PARAMS = {
    "aos": {"tau", "tau2", "lam", "alpha", "c"},
    "ft": {"alpha", "c"},
    "er": {"alpha", "c", "memory", "weight_er"},
    "ogem": {"alpha", "c", "memory"},
    "uoe": {"alpha", "c"},
    "ewc": {"alpha", "c", "lambda_ewc", "gamma", "refresh_every"},
}


@dataclass(frozen=True)
class RunConfig:
    method: str = "aos"
    tau: float = 1.0
    tau2: float = 1.0
    lam: float = 0.1
    alpha: float = 0.01
    c: float = 0.3
    memory: int = 200
    weight_er: float = 1.0
    lambda_ewc: float = 100.0
    gamma: float = 0.95
    refresh_every: int = 50
    fisher_samples: int = 200
    stream: str = "seq1"
    seed: int = 0
    eval_every: int = 100
    output_dir: str | None = None
    pretrain_epochs: int = 30

    def __post_init__(self):
        if self.method not in METHODS:
            raise SpecError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.eval_every < 1:
            raise SpecError("eval_every must be >= 1")
        if self.memory < 0:
            raise SpecError("memory size must be >= 0")
        if not self.alpha > 0:
            raise SpecError("learning rate must be positive")
        if self.method == "aos":
            self.aos_config()  # validates tau, tau2, lam
        if self.method == "ewc" and not (0 <= self.gamma <= 1 and self.lambda_ewc >= 0 and self.refresh_every >= 1):
            raise SpecError("EWC needs 0 <= gamma <= 1, lambda_ewc >= 0, refresh_every >= 1")

    def aos_config(self) -> AosConfig:
        return AosConfig(tau=self.tau, tau2=self.tau2, lam=self.lam, alpha=self.alpha, c=self.c)

    def method_params(self) -> dict:
        return {k: getattr(self, k) for k in sorted(_METHOD_PARAMS[self.method])}

    def key(self) -> str:
        """Stable identifier of the method and its parameters."""
        return self.method + "(" + ",".join(f"{k}={v}" for k, v in self.method_params().items()) + ")"

    def stream_spec(self) -> StreamSpec:
        return preset(self.stream, self.seed)


@dataclass
class RunRecord:
    config: dict
    stream: str
    task_order: list
    initial_errors: dict
    reports: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    n_steps: int = 0
    status: str = "running"
    error: str | None = None
    wall_clock: float = 0.0
    checkpoints: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> RunRecord:
        return cls(**data)


def make_learner(config: RunConfig, pre: Pretrained):
    theta0, F0, W0 = pre.theta0, pre.F0, pre.W0
    common = {"alpha": config.alpha, "c": config.c}
    # rehearsal memories have seen the initial task's data before the stream starts
    initial = [u.sample() for u in pre.data.train]
    if config.method == "aos":
        return AosLearner(theta0, F0, W0, config.aos_config())
    if config.method == "ft":
        return FineTune(theta0, F0, W0, **common)
    if config.method == "er":
        return ExperienceReplay(theta0, F0, W0, memory_size=config.memory, weight_er=config.weight_er,
                                seed=config.seed, initial_samples=initial, **common)
    if config.method == "ogem":
        return OnlineGEM(theta0, F0, W0, memory_size=config.memory, seed=config.seed,
                         initial_samples=initial, **common)
    if config.method == "uoe":
        return UpdateOnlyEncoder(theta0, F0, W0, **common)
    if config.method == "ewc":
        # the initial task's data is still available before the stream starts
        return OnlineEWC(theta0, F0, W0, pre.data.train[:config.fisher_samples],
                         lambda_ewc=config.lambda_ewc, gamma=config.gamma,
                         refresh_every=config.refresh_every, **common)
    raise SpecError(f"unknown method {config.method!r}")


def pretrained_for(config: RunConfig, spec: StreamSpec) -> Pretrained:
    return pretrain(spec, ModelConfig(d_i=spec.d_i, C=spec.vocab, c=config.c),
                    PretrainConfig(epochs=config.pretrain_epochs), seed=config.seed)


def run(config: RunConfig, pre: Pretrained | None = None, spec: StreamSpec | None = None,
        eval_split: str = "test", learner=None) -> RunRecord:
    """Feed every stream batch to the learner exactly once, evaluating the inference model on a cadence.

    Evaluations happen every ``eval_every`` batches and at each task boundary
    (the boundary is known to the harness only, never to the learner). A
    numeric failure ends the run early with ``status == "failed"`` and the
    reports gathered so far.
    """
    t_start = time.perf_counter()
    spec = spec or config.stream_spec()
    pre = pre or pretrained_for(config, spec)
    learner = learner or make_learner(config, pre)
    sets = eval_sets(spec, eval_split)
    all_tasks = [0, *spec.task_order]

    initial = metrics.evaluate(pre.theta0, sets, all_tasks).per_task_error
    record = RunRecord(
        config={**asdict(config), "key": config.key()},
        stream=spec.name,
        task_order=all_tasks,
        initial_errors={str(k): v for k, v in initial.items()},
    )
    at_completion = {0: initial[0]}
    seen = [0]
    reports: list[metrics.EvalReport] = []
    current = 0
    step = 0

    def checkpoint(kind):
        if reports and reports[-1].step == step:
            reports[-1].extra["kind"] = kind  # boundary/final label wins over cadence
            return reports[-1]
        rep = metrics.evaluate(learner.params, sets, seen, step=step)
        rep.forgetting_t0 = rep.per_task_error[0] - initial[0]
        completed = [t for t in at_completion if t != current]
        rep.bwt = metrics.backward_transfer(rep.per_task_error, at_completion, completed)
        rep.extra = {"kind": kind, "seen_tasks": list(seen)}
        reports.append(rep)
        log.info("step %d (%s) awer %.4f", step, kind, rep.awer)
        return rep

    try:
        for batch in generate_stream(spec):
            if batch.task_id != current:
                if step > 0:
                    at_completion[current] = checkpoint("boundary").per_task_error[current]
                current = batch.task_id
                seen.append(current)
            learner.step(batch.learner_view())
            step += 1
            if step % config.eval_every == 0:
                checkpoint("cadence")
        checkpoint("final")
        record.status = "ok"
    except (NumericError, FloatingPointError) as exc:
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
        log.error("run failed at step %d: %s", step, exc)
    record.n_steps = step
    record.reports = [rep.as_record() for rep in reports]
    if record.reports:
        last = record.reports[-1]
        record.summary = {"per_task_error": last["per_task_error"], "awer": last["awer"], "step": last["step"]}
    record.wall_clock = time.perf_counter() - t_start
    if config.output_dir:
        write_record(record, Path(config.output_dir), learner)
    return record


def write_record(record: RunRecord, out_dir: Path, learner=None) -> None:
    """Persist ``metrics.jsonl`` (one evaluation per line), ``summary.csv`` and ``record.json``."""
    from aoscl.harness.report import summary_rows, write_csv

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for rep in record.reports:
            fh.write(json.dumps(rep, sort_keys=True) + "\n")
    write_csv(out_dir / "summary.csv", summary_rows([record]))
    if learner is not None and isinstance(learner, AosLearner):
        stem = out_dir / "checkpoint"
        save_checkpoint(stem, learner.state, learner.config)
        record.checkpoints.append(str(stem))
    with open(out_dir / "record.json", "w", encoding="utf-8") as fh:
        json.dump(record.to_json(), fh, indent=2, sort_keys=True)
