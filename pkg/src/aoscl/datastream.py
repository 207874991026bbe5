"""Synthetic accent/speaker task stream.

A shared "language" maps each token to a fixed code vector. An utterance lays
its tokens out over time (one leading silence frame, then 2-3 frames per
token), rotates the codes by the task's orthogonal mixing matrix ("accent"),
adds the speaker's offset and Gaussian noise. The last target token is always
the end-of-sequence symbol ``C - 1``.

Every random draw comes from a generator seeded by ``(seed, purpose, accent)``
so the initial split, the stream and the held-out sets never share draws and
are identical whatever the task order.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from aoscl import flatio
from aoscl.errors import SpecError
from aoscl.seqmodel.model import Sample, Utterance

# generator purposes
_LANGUAGE, _TRAIN, _TEST, _VALID, _ACCENT = 0, 1, 2, 3, 4


MIN_ACCENT_GAP = 0.1  # Frobenius distance between mixing matrices of distinct accents


@dataclass(frozen=True)
class StreamSpec:
    n_tasks: int = 6
    utterances_per_task: tuple = (2000, 400, 400, 400, 400, 400)
    speakers_per_task: tuple = (40, 10, 10, 10, 10, 10)
    batch_size_cap: int = 8
    frame_len_range: tuple = (7, 22)
    target_len_range: tuple = (3, 7)  # includes the end-of-sequence token
    noise_std: float = 0.05
    seed: int = 0
    task_order: tuple = (1, 2, 3, 4, 5)
    accents: tuple = (0, 1, 2, 3, 4, 5)  # generator identity of each task index
    eval_size: int = 200
    vocab: int = 12
    d_i: int = 8
    accent_shift: float = 0.15
    speaker_scale: float = 1.0
    speaker_shift: float = 0.3
    eval_speakers: int = 20  # held-out speakers per task, used only by evaluation sets
    name: str = "custom"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = self.n_tasks
        if n < 1:
            raise SpecError("need at least the initial task")
        for fld in ("utterances_per_task", "speakers_per_task", "accents"):
            if len(getattr(self, fld)) != n:
                raise SpecError(f"{fld} must have one entry per task ({n})")
        if sorted(self.task_order) != list(range(1, n)):
            raise SpecError(f"task_order must be a permutation of 1..{n - 1}")
        if len(set(self.accents)) != n:
            raise SpecError("accents must be distinct")
        if self.batch_size_cap < 1:
            raise SpecError("batch_size_cap must be >= 1")
        u = self.utterances_per_task
        if n > 1 and not all(u[0] > x for x in u[1:]):
            raise SpecError("the initial task must be strictly the largest")
        for count, speakers in zip(u, self.speakers_per_task):
            if not 1 <= speakers <= count:
                raise SpecError("each task needs between 1 and utterance-count speakers")
        lo_w, hi_w = self.target_len_range
        lo_f, hi_f = self.frame_len_range
        if not 2 <= lo_w <= hi_w:
            raise SpecError("target lengths must be >= 2 (content plus end-of-sequence)")
        # every target length must admit a CTC-feasible frame count in range
        if max(lo_f, 2 * hi_w + 1) > hi_f:
            raise SpecError(
                f"frame_len_range {self.frame_len_range} cannot hold {hi_w} tokens (needs >= {2 * hi_w + 1} frames)"
            )
        if self.noise_std < 0 or self.eval_size < 1 or self.eval_speakers < 1:
            raise SpecError("noise_std must be >= 0, eval_size and eval_speakers >= 1")
        if not 0 <= self.speaker_scale <= 1:
            raise SpecError("speaker offsets are bounded by 1.0")
        if self.vocab < 3:
            raise SpecError("vocab must hold at least two content tokens and end-of-sequence")

    def with_seed(self, seed: int) -> StreamSpec:
        return replace(self, seed=seed)

    def initial_key(self) -> tuple:
        """Fields that determine the initial task's data (and hence the pretrained model)."""
        return (
            self.seed, self.accents[0], self.utterances_per_task[0], self.speakers_per_task[0],
            self.frame_len_range, self.target_len_range, self.noise_std, self.eval_size,
            self.vocab, self.d_i, self.accent_shift, self.speaker_scale,
            self.speaker_shift, self.eval_speakers,
        )

    @cached_property
    def generators(self) -> tuple:
        lang = _language(self)
        gens = tuple(TaskGenerator.build(self, i, lang) for i in range(self.n_tasks))
        for i in range(len(gens)):
            for j in range(i):
                if self.accents[i] == self.accents[j]:
                    continue
                gap = np.linalg.norm(gens[i].mixing_matrix - gens[j].mixing_matrix)
                if gap <= MIN_ACCENT_GAP:
                    raise SpecError(f"tasks {j} and {i} are too similar (mixing distance {gap:.3g})")
        return gens


def preset(name: str, seed: int = 0) -> StreamSpec:
    """Named streams: ``seq1``/``seq2`` (two task orders) and the small ``test`` experiment."""
    if name == "seq1":
        return StreamSpec(seed=seed, task_order=(1, 2, 3, 4, 5), name="seq1")
    if name == "seq2":
        return StreamSpec(seed=seed, task_order=(5, 3, 2, 1, 4), name="seq2")
    if name == "test":
        # ~5% of the main stream, one new accent not among the main six
        return StreamSpec(
            n_tasks=2, utterances_per_task=(2000, 100), speakers_per_task=(40, 3),
            task_order=(1,), accents=(0, 6), seed=seed, name="test",
        )
    raise SpecError(f"unknown stream preset {name!r}")


PRESETS = ("seq1", "seq2", "test")


def _rng(spec: StreamSpec, purpose: int, key: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, purpose, key])


def _language(spec: StreamSpec) -> np.ndarray:
    """Token code vectors; row ``C`` (extra) is silence."""
    rng = _rng(spec, _LANGUAGE, 0)
    codes = rng.normal(size=(spec.vocab, spec.d_i))
    return np.vstack([codes, np.zeros((1, spec.d_i))])


@dataclass
class TaskGenerator:
    """Accent (orthogonal mixing) plus per-speaker offsets and small rotations.

    Speakers ``0 .. n-1`` produce the training/stream data; the following
    ``eval_speakers`` ids are held out for evaluation sets.
    """

    task_id: int
    mixing_matrix: np.ndarray
    speaker_offsets: np.ndarray
    speaker_mixing: np.ndarray = field(repr=False)
    codes: np.ndarray = field(repr=False)
    n_train_speakers: int = 0

    @classmethod
    def build(cls, spec: StreamSpec, task_id: int, codes) -> TaskGenerator:
        accent = spec.accents[task_id]
        rng = _rng(spec, _ACCENT, accent)
        d = spec.d_i
        mixing = expm(spec.accent_shift * _skew(rng, d))
        n_train = spec.speakers_per_task[task_id]
        n_spk = n_train + spec.eval_speakers
        offsets = rng.normal(size=(n_spk, d))
        norms = np.linalg.norm(offsets, axis=1, keepdims=True)
        radius = rng.uniform(0, spec.speaker_scale, size=(n_spk, 1))
        offsets = offsets / np.maximum(norms, 1e-12) * radius
        speaker_mixing = np.stack([mixing @ expm(spec.speaker_shift * _skew(rng, d)) for _ in range(n_spk)])
        return cls(task_id, mixing, offsets, speaker_mixing, codes, n_train)

    def utterance(self, spec: StreamSpec, rng, speaker: int) -> Utterance:
        eos = spec.vocab - 1
        silence = spec.vocab
        n_tok = int(rng.integers(spec.target_len_range[0], spec.target_len_range[1] + 1))
        targets = _no_repeat_tokens(rng, n_tok - 1, eos) + (eos,)
        lo = max(spec.frame_len_range[0], 2 * n_tok + 1)
        hi = max(lo, min(spec.frame_len_range[1], 3 * n_tok + 1))
        n_frames = int(rng.integers(lo, hi + 1))
        durations = 2 + rng.multinomial(n_frames - 1 - 2 * n_tok, np.full(n_tok, 1.0 / n_tok))
        layout = np.concatenate([[silence], np.repeat(targets, durations)])
        clean = self.codes[layout] @ self.speaker_mixing[speaker].T + self.speaker_offsets[speaker]
        frames = clean + spec.noise_std * rng.normal(size=clean.shape)
        return Utterance(frames, targets, speaker_id=speaker, task_id=self.task_id)

    def draw(self, spec: StreamSpec, rng, count: int, sort_by_speaker: bool, held_out: bool = False) -> list[Utterance]:
        if held_out:
            pool = np.arange(self.n_train_speakers, len(self.speaker_offsets))
        else:
            pool = np.arange(self.n_train_speakers)
        # every speaker gets at least one utterance when possible; the rest are spread at random
        base = pool[:count]
        speakers = np.concatenate([base, rng.choice(pool, size=count - len(base))])
        if sort_by_speaker:
            speakers = np.sort(speakers, kind="stable")
        else:
            speakers = rng.permutation(speakers)
        return [self.utterance(spec, rng, int(s)) for s in speakers]


def _skew(rng, d) -> np.ndarray:
    a = rng.normal(size=(d, d)) / np.sqrt(d)
    return a - a.T


def _no_repeat_tokens(rng, n, n_symbols) -> tuple:
    """``n`` tokens from ``[0, n_symbols)`` with no token equal to its predecessor.

    With 2-3 frames per token a run of identical tokens has no audible
    boundary, so the language never produces one.
    """
    out = [int(rng.integers(0, n_symbols))]
    for _ in range(n - 1):
        t = int(rng.integers(0, n_symbols - 1))
        out.append(t + 1 if t >= out[-1] else t)
    return tuple(out[:n])


@dataclass(frozen=True, eq=False)
class LearnerBatch:
    """Learner-facing batch: samples and counts, no task or speaker labels."""

    samples: tuple
    F: int
    W: int

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True, eq=False)
class Batch:
    utterances: tuple
    F: int
    W: int

    @classmethod
    def of(cls, utterances) -> Batch:
        utterances = tuple(utterances)
        return cls(utterances, sum(u.n_frames for u in utterances), sum(u.n_tokens for u in utterances))

    @property
    def speaker_id(self) -> int:
        return self.utterances[0].speaker_id

    @property
    def task_id(self) -> int:
        return self.utterances[0].task_id

    def learner_view(self) -> LearnerBatch:
        return LearnerBatch(tuple(u.sample() for u in self.utterances), self.F, self.W)


@dataclass
class InitialData:
    train: list
    validation: list
    test: list
    F0: int
    W0: int


def generate_initial_dataset(spec: StreamSpec) -> InitialData:
    gen = spec.generators[0]
    train = gen.draw(spec, _rng(spec, _TRAIN, spec.accents[0]), spec.utterances_per_task[0], sort_by_speaker=False)
    validation = eval_sets(spec, "validation")[0]
    test = eval_sets(spec)[0]
    F0 = sum(u.n_frames for u in train)
    W0 = sum(u.n_tokens for u in train)
    return InitialData(train, validation, test, F0, W0)


def task_utterances(spec: StreamSpec, task_id: int) -> list[Utterance]:
    """All stream utterances of one task, sorted by speaker."""
    gen = spec.generators[task_id]
    rng = _rng(spec, _TRAIN, spec.accents[task_id])
    return gen.draw(spec, rng, spec.utterances_per_task[task_id], sort_by_speaker=True)


def generate_stream(spec: StreamSpec) -> Iterator[Batch]:
    """Single-speaker batches, contiguous by task (in ``task_order``) and by speaker."""
    B = spec.batch_size_cap
    for task_id in spec.task_order:
        utts = task_utterances(spec, task_id)
        i = 0
        while i < len(utts):
            speaker = utts[i].speaker_id
            j = i
            while j < len(utts) and utts[j].speaker_id == speaker:
                j += 1
            for k in range(i, j, B):
                yield Batch.of(utts[k:min(k + B, j)])
            i = j


def eval_sets(spec: StreamSpec, split: str = "test") -> dict[int, list[Utterance]]:
    """Fixed-size held-out set per task (``split`` is ``"test"`` or ``"validation"``).

    Drawn from each task's held-out speakers with generators no other data uses.
    """
    purpose = {"test": _TEST, "validation": _VALID}[split]
    out = {}
    for task_id, gen in enumerate(spec.generators):
        rng = _rng(spec, purpose, spec.accents[task_id])
        out[task_id] = gen.draw(spec, rng, spec.eval_size, sort_by_speaker=False, held_out=True)
    return out


# ---------------------------------------------------------------- archive


def export_dataset(stem, utterances, meta=None) -> None:
    """Write utterances to the flat binary format (frames and targets as doubles)."""
    archive = flatio.FlatArchive(meta=dict(meta or {}))
    for i, u in enumerate(utterances):
        tags = {"speaker": u.speaker_id, "task": u.task_id} if isinstance(u, Utterance) else {}
        archive.add(f"u{i}.frames", u.frames, **tags)
        archive.add(f"u{i}.targets", np.asarray(u.targets, dtype=np.float64))
    archive.meta.setdefault("count", len(utterances))
    flatio.write(stem, archive)


def import_dataset(stem) -> list[Utterance]:
    archive = flatio.read(stem)
    out = []
    for i in range(int(archive.meta["count"])):
        tags = archive.tags[f"u{i}.frames"]
        out.append(Utterance(
            archive.arrays[f"u{i}.frames"],
            tuple(int(t) for t in archive.arrays[f"u{i}.targets"]),
            speaker_id=int(tags.get("speaker", -1)),
            task_id=int(tags.get("task", -1)),
        ))
    return out


__all__ = [
    "Batch",
    "InitialData",
    "LearnerBatch",
    "PRESETS",
    "Sample",
    "StreamSpec",
    "TaskGenerator",
    "eval_sets",
    "export_dataset",
    "generate_initial_dataset",
    "generate_stream",
    "import_dataset",
    "preset",
    "task_utterances",
]
