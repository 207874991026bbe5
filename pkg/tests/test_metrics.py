import numpy as np
import pytest

from aoscl import metrics
from aoscl.seqmodel import Utterance, greedy_decode, init_params
from tests.conftest import SMALL


def test_edit_distance_examples():
    assert metrics.edit_distance("kitten", "sitting") == 3
    assert metrics.edit_distance([], [1, 2]) == 2
    assert metrics.edit_distance([1, 2, 3], [1, 2, 3]) == 0


def test_token_error_rate():
    assert metrics.token_error_rate([1, 2, 3], [1, 2, 3]) == 0.0
    assert metrics.token_error_rate([1, 3], [1, 2, 3]) == pytest.approx(1 / 3)
    assert metrics.token_error_rate([1, 2, 3, 4, 5], [1]) == 4.0  # insertions can exceed 100%
    with pytest.raises(ValueError):
        metrics.token_error_rate([1], [])


def test_awer_and_weighted():
    errs = {0: 0.2, 1: 0.1, 2: 0.3}
    assert metrics.awer(errs) == pytest.approx(0.2)
    assert metrics.awer(errs, [0, 1]) == pytest.approx(0.15)
    assert metrics.weighted_awer(0.1, 0.4) == pytest.approx(0.2)
    assert metrics.weighted_awer(0.1, 0.4, w=1) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        metrics.awer({}, [])


def test_forgetting_and_bwt():
    now = {0: 0.3, 1: 0.2, 2: 0.1}
    then = {0: 0.1, 1: 0.25, 2: 0.1}
    assert metrics.forgetting(now, then, [0, 1]) == pytest.approx({0: 0.2, 1: -0.05})
    assert metrics.backward_transfer(now, then, [0, 1]) == pytest.approx(-0.075)
    assert metrics.backward_transfer(now, then, []) is None


def test_task_error_strips_end_token():
    params = init_params(SMALL, 0)
    frames = np.random.default_rng(0).normal(size=(7, SMALL.d_i))
    hyp = greedy_decode(params, frames)
    u = Utterance(frames, tuple(hyp) + (SMALL.eos,)) if hyp else Utterance(frames, (0, SMALL.eos))
    expect = 0.0 if hyp else 1.0
    assert metrics.task_error(params, [u]) == expect


def test_evaluate_does_not_mutate():
    params = init_params(SMALL, 0)
    before = params.copy()
    rng = np.random.default_rng(1)
    sets = {t: [Utterance(rng.normal(size=(7, SMALL.d_i)), (t, SMALL.eos))] for t in range(3)}
    rep = metrics.evaluate(params, sets, [0, 2], step=5)
    assert params.equal(before)
    assert set(rep.per_task_error) == {0, 2} and rep.step == 5
    assert rep.awer == pytest.approx(np.mean(list(rep.per_task_error.values())))
    rec = rep.as_record()
    assert list(rec["per_task_error"]) == ["0", "2"]
    with pytest.raises(KeyError):
        metrics.evaluate(params, sets, [7])
