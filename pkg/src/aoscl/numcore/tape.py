"""A small taped reverse-mode differentiator over a fixed set of dense ops.

Every op returns a :class:`Node`. Nodes created from at least one
gradient-tracking input register themselves on that input's :class:`Tape`
together with a closure that pushes the output gradient back to the inputs.
Constant-only subgraphs (e.g. a teacher forward pass) never touch a tape.
"""

from __future__ import annotations

import numpy as np

from aoscl.errors import FeasibilityError, NumericError

LN_EPS = 1e-5


class Tape:
    """Wengert list of nodes in creation order."""

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, name=None) -> Node:
        node = Node(np.asarray(value, dtype=np.float64), tape=self, name=name)
        node.grad = None
        return node

    def backward(self, out: Node) -> None:
        if out.tape is not self:
            raise ValueError("output node does not belong to this tape")
        if np.ndim(out.value) != 0:
            raise ValueError("backward needs a scalar output")
        if not np.isfinite(out.value):
            raise NumericError("non-finite loss value")
        out.grad = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes):
            if node.grad is not None and node.backward_fn is not None:
                node.backward_fn(node.grad)


class Node:
    __slots__ = ("value", "grad", "tape", "backward_fn", "name")

    def __init__(self, value, tape=None, backward_fn=None, name=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def accumulate(self, g) -> None:
        if self.tape is None:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Node(shape={self.value.shape}, tracked={self.tracked})"


def const(value) -> Node:
    return Node(np.asarray(value, dtype=np.float64))


def _tape_of(*nodes):
    for n in nodes:
        if n.tape is not None:
            return n.tape
    return None


def _emit(value, inputs, backward_fn) -> Node:
    tape = _tape_of(*inputs)
    if tape is None:
        return Node(value)
    node = Node(value, tape=tape, backward_fn=backward_fn)
    tape.nodes.append(node)
    return node


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a: Node, b: Node) -> Node:
    def back(g):
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(g, b.value.shape))

    return _emit(a.value + b.value, (a, b), back)


def scale(a: Node, s: float) -> Node:
    return _emit(a.value * s, (a,), lambda g: a.accumulate(g * s))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return _emit(y, (a,), lambda g: a.accumulate(g * (1.0 - y * y)))


def weighted_sum(terms) -> Node:
    """``sum(w * node)`` over ``(w, node)`` pairs of scalar or same-shape nodes."""
    terms = [(float(w), n) for w, n in terms]
    value = sum(w * n.value for w, n in terms)

    def back(g):
        for w, n in terms:
            n.accumulate(g * w)

    return _emit(np.asarray(value, dtype=np.float64), [n for _, n in terms], back)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Node, b: Node) -> Node:
    def back(g):
        if a.tracked:
            a.accumulate(g @ b.value.T)
        if b.tracked:
            b.accumulate(a.value.T @ g)

    return _emit(a.value @ b.value, (a, b), back)


def transpose(a: Node) -> Node:
    return _emit(a.value.T, (a,), lambda g: a.accumulate(g.T))


def gather_rows(table: Node, idx) -> Node:
    """Embedding lookup: rows ``table[idx]``."""
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        if table.tracked:
            full = np.zeros_like(table.value)
            np.add.at(full, idx, g)
            table.accumulate(full)

    return _emit(table.value[idx], (table,), back)


def vstack(parts) -> Node:
    parts = list(parts)
    values = [np.atleast_2d(p.value) for p in parts]
    sizes = [v.shape[0] for v in values]

    def back(g):
        i = 0
        for p, n in zip(parts, sizes):
            p.accumulate(g[i:i + n].reshape(p.value.shape))
            i += n

    return _emit(np.vstack(values), parts, back)


def temporal_context(x: Node) -> Node:
    """Width-3 zero-padded context window: row t becomes ``[x[t-1], x[t], x[t+1]]``."""
    v = x.value
    T, d = v.shape
    prev = np.zeros_like(v)
    nxt = np.zeros_like(v)
    prev[1:] = v[:-1]
    nxt[:-1] = v[1:]

    def back(g):
        gx = g[:, d:2 * d].copy()
        gx[:-1] += g[1:, :d]
        gx[1:] += g[:-1, 2 * d:]
        x.accumulate(gx)

    return _emit(np.hstack([prev, v, nxt]), (x,), back)


# ---------------------------------------------------------------- normalization


def layer_norm(x: Node, gain: Node, bias: Node) -> Node:
    v = x.value
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv

    def back(g):
        if gain.tracked:
            gain.accumulate(_unbroadcast(g * xhat, gain.value.shape))
        if bias.tracked:
            bias.accumulate(_unbroadcast(g, bias.value.shape))
        if x.tracked:
            gh = g * gain.value
            d = v.shape[-1]
            gx = inv / d * (d * gh - gh.sum(axis=-1, keepdims=True)
                            - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
            x.accumulate(gx)

    return _emit(xhat * gain.value + bias.value, (x, gain, bias), back)


def softmax(x: Node) -> Node:
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        x.accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _emit(y, (x,), back)


def log_softmax(x: Node) -> Node:
    z = x.value - x.value.max(axis=-1, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    def back(g):
        x.accumulate(g - np.exp(y) * g.sum(axis=-1, keepdims=True))

    return _emit(y, (x,), back)


def attention(q: Node, k: Node, v: Node) -> Node:
    """Single-head scaled dot-product attention ``softmax(q k^T / sqrt(d)) v``."""
    d = q.value.shape[-1]
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(d))
    return matmul(softmax(scores), v)


# ---------------------------------------------------------------- losses


def pick_nll(logp: Node, targets, norm: float = 1.0) -> Node:
    """``-sum_t logp[t, targets[t]] / norm``."""
    targets = np.asarray(targets, dtype=np.intp)
    rows = np.arange(len(targets))
    value = -logp.value[rows, targets].sum() / norm

    def back(g):
        full = np.zeros_like(logp.value)
        full[rows, targets] = -g / norm
        logp.accumulate(full)

    return _emit(np.asarray(value), (logp,), back)


def soft_cross_entropy(logp: Node, probs, norm: float = 1.0) -> Node:
    """``-sum probs * logp / norm`` with ``probs`` held constant."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != logp.value.shape:
        raise ValueError(f"teacher shape {probs.shape} != student shape {logp.value.shape}")
    value = -(probs * logp.value).sum() / norm
    return _emit(np.asarray(value), (logp,), lambda g: logp.accumulate(-g * probs / norm))


def ctc_min_frames(targets) -> int:
    """Shortest frame count able to emit ``targets`` (a blank between repeats)."""
    targets = list(targets)
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def _logaddexp3(a, b, c):
    m = np.maximum(np.maximum(a, b), c)
    safe = np.where(np.isneginf(m), 0.0, m)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(a - safe) + np.exp(b - safe) + np.exp(c - safe))


def ctc_forward_backward(logp, targets, blank):
    """Log-space CTC forward/backward.

    Returns ``(log_likelihood, grad)`` where ``grad`` is the derivative of the
    log-likelihood w.r.t. each entry of ``logp``.
    """
    logp = np.asarray(logp, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.intp)
    T = logp.shape[0]
    L = len(targets)
    if L == 0:
        raise FeasibilityError("CTC target must contain at least one token")
    if T < ctc_min_frames(targets):
        raise FeasibilityError(f"{T} frames cannot emit {L} tokens with {ctc_min_frames(targets) - L} repeats")
    S = 2 * L + 1
    ext = np.full(S, blank, dtype=np.intp)
    ext[1::2] = targets
    # skip transition s-2 -> s allowed for labels differing from the label two back
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = targets[1:] != targets[:-1]
    skip[1] = False
    neg = -np.inf
    emit = logp[:, ext]  # T x S

    alpha = np.full((T, S), neg)
    alpha[0, 0] = emit[0, 0]
    alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        a = alpha[t - 1]
        s1 = np.full(S, neg)
        s1[1:] = a[:-1]
        s2 = np.full(S, neg)
        s2[2:] = a[:-2]
        s2[~skip] = neg
        alpha[t] = _logaddexp3(a, s1, s2) + emit[t]

    # beta excludes the emission at t
    beta = np.full((T, S), neg)
    beta[T - 1, S - 1] = 0.0
    beta[T - 1, S - 2] = 0.0
    skip_from = np.zeros(S, dtype=bool)  # s -> s+2 allowed
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        b = beta[t + 1] + emit[t + 1]
        s1 = np.full(S, neg)
        s1[:-1] = b[1:]
        s2 = np.full(S, neg)
        s2[:-2] = b[2:]
        s2[~skip_from] = neg
        beta[t] = _logaddexp3(b, s1, s2)

    loglik = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    if not np.isfinite(loglik):
        raise NumericError("CTC likelihood underflowed to zero")
    occ = np.exp(alpha + beta - loglik)  # T x S posterior occupancy
    grad = np.zeros_like(logp)
    for s in range(S):
        grad[:, ext[s]] += occ[:, s]
    return loglik, grad


def ctc_nll(logp: Node, targets, blank: int, norm: float = 1.0) -> Node:
    """CTC negative log-likelihood of ``targets`` under per-frame ``logp``, divided by ``norm``."""
    loglik, grad = ctc_forward_backward(logp.value, targets, blank)
    return _emit(np.asarray(-loglik / norm), (logp,), lambda g: logp.accumulate(-g * grad / norm))
