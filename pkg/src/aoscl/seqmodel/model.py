"""Toy encoder-decoder with a CTC head on the encoder and an attention decoder.

Encoder: ``n_enc`` blocks of width-3 temporal convolution, tanh and layer norm
(residual from the second block on). The CTC head is an affine map onto
``C + 1`` symbols with the blank last.

Decoder (teacher forced): input row ``t`` is the embedding of ``y[t-1]`` (a
learned begin-of-sequence vector at ``t = 0``) plus a learned position
vector. One scaled dot-product attention over the encoder states, a residual
layer norm, ``n_dec`` feed-forward blocks and an affine map onto ``C``
symbols. Token ``C - 1`` is the end-of-sequence symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from aoscl.errors import SpecError
from aoscl.numcore import DECODER, ENCODER, ParamSet, Tape, const
from aoscl.numcore import tape as T


@dataclass(frozen=True)
class ModelConfig:
    d_i: int = 8
    d_h: int = 64
    n_enc: int = 2
    n_dec: int = 1
    C: int = 12
    c: float = 0.3
    max_len: int = 10

    def __post_init__(self):
        if not 0 <= self.c <= 1:
            raise SpecError(f"CTC weight c must lie in [0, 1], got {self.c}")
        if self.C < 2:
            raise SpecError("vocabulary needs at least two tokens")
        for name in ("d_i", "d_h", "n_enc", "n_dec", "max_len"):
            if getattr(self, name) < 1:
                raise SpecError(f"{name} must be >= 1")

    @property
    def blank(self) -> int:
        return self.C

    @property
    def eos(self) -> int:
        return self.C - 1


@dataclass(frozen=True, eq=False)
class Sample:
    """What a learner is allowed to see of one utterance."""

    frames: np.ndarray
    targets: tuple

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_tokens(self) -> int:
        return len(self.targets)


@dataclass(frozen=True, eq=False)
class Utterance(Sample):
    """A :class:`Sample` plus evaluation-only metadata."""

    speaker_id: int = -1
    task_id: int = -1

    def sample(self) -> Sample:
        return Sample(self.frames, self.targets)


@dataclass
class ModelOutputs:
    ctc_log_probs: np.ndarray  # L_F x (C + 1), blank last
    dec_log_probs: np.ndarray  # L_W x C, teacher forced


@dataclass(frozen=True)
class Shape:
    """Architecture facts recovered from a parameter set."""

    d_i: int
    d_h: int
    n_enc: int
    n_dec: int
    C: int
    max_len: int
    blank: int = field(init=False)
    eos: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "blank", self.C)
        object.__setattr__(self, "eos", self.C - 1)


def shape_of(params) -> Shape:
    n_enc = sum(1 for k in params if k.startswith("enc") and k.endswith(".W"))
    n_dec = sum(1 for k in params if k.startswith("dec") and k[3:4].isdigit() and k.endswith(".W"))
    return Shape(
        d_i=params["enc0.W"].shape[0] // 3,
        d_h=params["enc0.W"].shape[1],
        n_enc=n_enc,
        n_dec=n_dec,
        C=params["out.W"].shape[1],
        max_len=params["dec.pos"].shape[0],
    )


def init_params(config: ModelConfig, seed: int) -> ParamSet:
    rng = np.random.default_rng(seed)
    values, groups, norm = {}, {}, {}

    def add(name, value, group, is_norm=False):
        values[name] = value
        groups[name] = group
        norm[name] = is_norm

    def uniform(fan_in, shape):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    d_h, C = config.d_h, config.C
    d_in = config.d_i
    for i in range(config.n_enc):
        add(f"enc{i}.W", uniform(3 * d_in, (3 * d_in, d_h)), ENCODER)
        add(f"enc{i}.b", np.zeros(d_h), ENCODER)
        add(f"enc{i}.ln_g", np.ones(d_h), ENCODER, True)
        add(f"enc{i}.ln_b", np.zeros(d_h), ENCODER, True)
        d_in = d_h
    add("ctc.W", uniform(d_h, (d_h, C + 1)), ENCODER)
    add("ctc.b", np.zeros(C + 1), ENCODER)
    add("att.Wk", uniform(d_h, (d_h, d_h)), ENCODER)
    add("att.Wv", uniform(d_h, (d_h, d_h)), ENCODER)

    add("att.Wq", uniform(d_h, (d_h, d_h)), DECODER)
    add("dec.bos", uniform(1, (1, d_h)), DECODER)
    add("dec.emb", uniform(1, (C, d_h)), DECODER)
    add("dec.pos", uniform(1, (config.max_len, d_h)), DECODER)
    add("dec.ln_g", np.ones(d_h), DECODER, True)
    add("dec.ln_b", np.zeros(d_h), DECODER, True)
    for j in range(config.n_dec):
        add(f"dec{j}.W", uniform(d_h, (d_h, d_h)), DECODER)
        add(f"dec{j}.b", np.zeros(d_h), DECODER)
        add(f"dec{j}.ln_g", np.ones(d_h), DECODER, True)
        add(f"dec{j}.ln_b", np.zeros(d_h), DECODER, True)
    add("out.W", uniform(d_h, (d_h, C)), DECODER)
    add("out.b", np.zeros(C), DECODER)
    return ParamSet(values, groups, norm)


def bind(params: ParamSet, tape: Tape | None = None) -> dict:
    """Wrap parameter arrays as tape leaves (or constants when ``tape`` is None)."""
    if tape is None:
        return {k: const(v) for k, v in params.items()}
    return {k: tape.leaf(v, name=k) for k, v in params.items()}


def _sinusoid(n, d):
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(100.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def encode(P: dict, frames) -> T.Node:
    frames = np.asarray(frames, dtype=np.float64)
    h = const(frames)
    i = 0
    while f"enc{i}.W" in P:
        z = T.tanh(T.add(T.matmul(T.temporal_context(h), P[f"enc{i}.W"]), P[f"enc{i}.b"]))
        if i > 0:
            z = T.add(h, z)
        h = T.layer_norm(z, P[f"enc{i}.ln_g"], P[f"enc{i}.ln_b"])
        i += 1
    return h


def ctc_head(P: dict, h: T.Node) -> T.Node:
    return T.log_softmax(T.add(T.matmul(h, P["ctc.W"]), P["ctc.b"]))


def _keys_values(P: dict, h: T.Node):
    n, d = h.value.shape
    keys = T.matmul(T.add(h, const(_sinusoid(n, d))), P["att.Wk"])
    values = T.matmul(h, P["att.Wv"])
    return keys, values


def _decoder_rows(P: dict, keys, values, prev_tokens, positions) -> T.Node:
    """Log-probs for decoder rows given each row's previous token (-1 = BOS)."""
    rows = []
    for tok in prev_tokens:
        rows.append(P["dec.bos"] if tok < 0 else T.gather_rows(P["dec.emb"], [tok]))
    x = T.add(T.vstack(rows), T.gather_rows(P["dec.pos"], positions))
    ctx = T.attention(T.matmul(x, P["att.Wq"]), keys, values)
    h = T.layer_norm(T.add(x, ctx), P["dec.ln_g"], P["dec.ln_b"])
    j = 0
    while f"dec{j}.W" in P:
        z = T.tanh(T.add(T.matmul(h, P[f"dec{j}.W"]), P[f"dec{j}.b"]))
        h = T.layer_norm(T.add(h, z), P[f"dec{j}.ln_g"], P[f"dec{j}.ln_b"])
        j += 1
    return T.log_softmax(T.add(T.matmul(h, P["out.W"]), P["out.b"]))


def _check_sample(P: dict, sample) -> None:
    frames = np.asarray(sample.frames)
    d_i = P["enc0.W"].value.shape[0] // 3
    if frames.ndim != 2 or frames.shape[1] != d_i:
        raise ValueError(f"frames must be L_F x {d_i}, got {frames.shape}")
    n = len(sample.targets)
    if n > P["dec.pos"].value.shape[0]:
        raise ValueError(f"target length {n} exceeds max_len {P['dec.pos'].value.shape[0]}")
    C = P["out.W"].value.shape[1]
    if any(not 0 <= t < C for t in sample.targets):
        raise ValueError("target token id out of range")


def forward_nodes(P: dict, sample):
    """Differentiable forward pass; returns ``(ctc_log_probs, dec_log_probs)`` nodes."""
    _check_sample(P, sample)
    h = encode(P, sample.frames)
    ctc = ctc_head(P, h)
    keys, values = _keys_values(P, h)
    targets = list(sample.targets)
    prev = [-1] + targets[:-1]
    dec = _decoder_rows(P, keys, values, prev, np.arange(len(targets)))
    return ctc, dec


def forward(params: ParamSet, utt) -> ModelOutputs:
    ctc, dec = forward_nodes(bind(params), utt)
    return ModelOutputs(ctc.value, dec.value)


def greedy_decode(params: ParamSet, frames) -> list[int]:
    """Greedy autoregressive decoding; the end-of-sequence token is not returned."""
    P = bind(params)
    shape = shape_of(params)
    h = encode(P, frames)
    keys, values = _keys_values(P, h)
    out: list[int] = []
    prev = -1
    for t in range(shape.max_len):
        logp = _decoder_rows(P, keys, values, [prev], [t]).value[0]
        tok = int(np.argmax(logp))
        if tok == shape.eos:
            break
        out.append(tok)
        prev = tok
    return out
