"""Composite training losses and their gradients.

All losses are length normalized: the decoder terms by the number of target
tokens, the CTC likelihood by the number of target tokens, the CTC
distillation term by the number of frames.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from aoscl.errors import NumericError
from aoscl.numcore import Grad, ParamSet, Tape, const
from aoscl.numcore import tape as T
from aoscl.seqmodel.model import ModelOutputs, bind, forward, forward_nodes


def ctc_loss(ctc_log_probs, targets, blank: int | None = None) -> float:
    """CTC negative log-likelihood (not normalized)."""
    logp = np.asarray(ctc_log_probs, dtype=np.float64)
    blank = logp.shape[1] - 1 if blank is None else blank
    return float(T.ctc_nll(const(logp), targets, blank).value)


def _ce_node(P, sample, c):
    ctc, dec = forward_nodes(P, sample)
    n_tok = len(sample.targets)
    terms = []
    if c < 1:
        terms.append((1 - c, T.pick_nll(dec, sample.targets, norm=n_tok)))
    if c > 0:
        blank = ctc.value.shape[1] - 1
        terms.append((c, T.ctc_nll(ctc, sample.targets, blank, norm=n_tok)))
    return T.weighted_sum(terms)


def _kd_node(P, teacher: ModelOutputs, sample, c):
    ctc, dec = forward_nodes(P, sample)
    if teacher.ctc_log_probs.shape != ctc.value.shape or teacher.dec_log_probs.shape != dec.value.shape:
        raise ValueError("teacher outputs were not produced on this utterance")
    terms = []
    if c < 1:
        terms.append((1 - c, T.soft_cross_entropy(dec, np.exp(teacher.dec_log_probs), norm=dec.value.shape[0])))
    if c > 0:
        terms.append((c, T.soft_cross_entropy(ctc, np.exp(teacher.ctc_log_probs), norm=ctc.value.shape[0])))
    return T.weighted_sum(terms)


def _total_node(P, teacher: ModelOutputs | None, sample, c, lam):
    if lam == 0:
        return _ce_node(P, sample, c)
    if lam == 1:
        return _kd_node(P, teacher, sample, c)
    return T.weighted_sum([(1 - lam, _ce_node(P, sample, c)), (lam, _kd_node(P, teacher, sample, c))])


def value_and_grad(params: ParamSet, build: Callable[[dict], T.Node]) -> tuple[float, Grad]:
    """Evaluate ``build(bound_params)`` on a fresh tape and backpropagate."""
    tape = Tape()
    P = bind(params, tape)
    out = build(P)
    tape.backward(out)
    grads = {k: (P[k].grad if P[k].grad is not None else np.zeros_like(params[k])) for k in params}
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in entry {k!r}", entry=k)
    return float(out.value), params.like(grads)


def _summed(node_fn, samples):
    def build(P):
        return T.weighted_sum([(1.0, node_fn(P, s)) for s in samples])
    return build


# ---------------------------------------------------------------- public API


def ce_loss(params: ParamSet, utt, c: float) -> float:
    """``(1 - c) * decoder CE + c * CTC``, both per target token."""
    return float(_ce_node(bind(params), utt, c).value)


def ce_loss_and_grad(params: ParamSet, utt, c: float) -> tuple[float, Grad]:
    return value_and_grad(params, lambda P: _ce_node(P, utt, c))


def kd_loss(student_params: ParamSet, teacher_outputs: ModelOutputs, utt, c: float) -> float:
    return float(_kd_node(bind(student_params), teacher_outputs, utt, c).value)


def kd_loss_and_grad(student_params: ParamSet, teacher_outputs: ModelOutputs, utt, c: float):
    return value_and_grad(student_params, lambda P: _kd_node(P, teacher_outputs, utt, c))


def total_loss(student: ParamSet, teacher: ParamSet, utt, c: float, lam: float) -> float:
    """``(1 - lam) * ce_loss + lam * kd_loss`` with the teacher held constant."""
    _check_lambda(lam)
    t_out = forward(teacher, utt) if lam > 0 else None
    return float(_total_node(bind(student), t_out, utt, c, lam).value)


def total_loss_and_grad(student: ParamSet, teacher: ParamSet, utt, c: float, lam: float):
    _check_lambda(lam)
    t_out = forward(teacher, utt) if lam > 0 else None
    return value_and_grad(student, lambda P: _total_node(P, t_out, utt, c, lam))


def batch_ce_and_grad(params: ParamSet, samples: Sequence, c: float) -> tuple[float, Grad]:
    """Sum of per-utterance ``ce_loss`` over a batch, with gradient."""
    return value_and_grad(params, _summed(lambda P, s: _ce_node(P, s, c), samples))


def batch_total_and_grad(student: ParamSet, teacher: ParamSet, samples: Sequence, c: float, lam: float):
    """Sum of per-utterance ``total_loss`` over a batch, with gradient."""
    _check_lambda(lam)
    t_outs = [forward(teacher, s) if lam > 0 else None for s in samples]
    pairs = list(zip(samples, t_outs))
    return value_and_grad(
        student,
        lambda P: T.weighted_sum([(1.0, _total_node(P, t, s, c, lam)) for s, t in pairs]),
    )


def _check_lambda(lam):
    if not 0 <= lam <= 1:
        raise ValueError(f"KD weight must lie in [0, 1], got {lam}")
