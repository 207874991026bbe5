import numpy as np
import pytest

from aoscl.errors import NumericError, StructuralMismatchError
from aoscl.numcore import (
    DECODER,
    ENCODER,
    ParamSet,
    Tape,
    axpy_combine,
    dot,
    finite_diff_grad,
    group_mask,
    sgd_step,
)
from aoscl.numcore import tape as T
from tests.helpers import rel_err


def toy_params(seed=0):
    rng = np.random.default_rng(seed)
    return ParamSet(
        {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=3), "g": np.ones(3)},
        {"a": ENCODER, "b": DECODER, "g": ENCODER},
        {"a": False, "b": False, "g": True},
    )


def test_axpy_linear_combination():
    p, q = toy_params(0), toy_params(1)
    r = axpy_combine(0.25, p, 0.75, q)
    for k in p:
        np.testing.assert_array_equal(r[k], 0.25 * p[k] + 0.75 * q[k])
    assert r.groups == p.groups and r.norm_flags == p.norm_flags


def test_axpy_identity_cases_are_exact_copies():
    p, q = toy_params(0), toy_params(1)
    assert axpy_combine(1.0, p, 0.0, q).equal(p)
    assert axpy_combine(0.0, p, 1.0, q).equal(q)
    out = axpy_combine(1.0, p, 0.0, q)
    out["a"][0, 0] = 99.0
    assert p["a"][0, 0] != 99.0


def test_axpy_rejects_mismatched_structure():
    p = toy_params()
    other = ParamSet({"a": np.zeros((2, 3))}, {"a": ENCODER})
    with pytest.raises(StructuralMismatchError):
        axpy_combine(1.0, p, 1.0, other)
    regrouped = ParamSet(dict(p), {**p.groups, "a": DECODER}, p.norm_flags)
    with pytest.raises(StructuralMismatchError):
        axpy_combine(1.0, p, 1.0, regrouped)


def test_sgd_step_arithmetic():
    p = ParamSet({"w": np.array([1.0, 1.0])}, {"w": ENCODER})
    g = p.like({"w": np.array([1.0, 2.0])})
    np.testing.assert_allclose(sgd_step(p, g, 0.1)["w"], [0.9, 0.8], rtol=0, atol=1e-15)
    q, h = toy_params(0), toy_params(1)
    out = sgd_step(q, h, 0.1)
    for k in q:
        np.testing.assert_array_equal(out[k], q[k] - 0.1 * h[k])


def test_sgd_zero_gradient_is_identity_and_rejects_bad_rate():
    p = toy_params()
    assert sgd_step(p, p.zeros_like(), 0.3).equal(p)
    with pytest.raises(ValueError):
        sgd_step(p, p.zeros_like(), 0.0)


def test_sgd_mask_freezes_entries_bit_exactly():
    p, g = toy_params(0), toy_params(1)
    out = sgd_step(p, g, 0.5, mask={"a": True, "b": False, "g": False})
    assert np.array_equal(out["b"], p["b"]) and np.array_equal(out["g"], p["g"])
    assert not np.array_equal(out["a"], p["a"])


def test_sgd_names_non_finite_entry():
    p, g = toy_params(0), toy_params(1)
    g = g.like({**g, "b": np.array([np.nan, 0.0, 0.0])})
    with pytest.raises(NumericError) as info:
        sgd_step(p, g, 0.1)
    assert info.value.entry == "b"


def test_dot_symmetric_and_matches_flat():
    p, q = toy_params(0), toy_params(1)
    assert dot(p, q) == pytest.approx(float(p.flat() @ q.flat()), rel=1e-14)
    assert dot(p, q) == pytest.approx(dot(q, p), rel=1e-14)


def test_group_mask():
    p = toy_params()
    assert group_mask(p, ENCODER) == {"a": True, "b": False, "g": True}
    assert group_mask(p, ENCODER, include_norm=False) == {"a": True, "b": False, "g": False}


def test_flat_round_trip():
    p = toy_params()
    assert p.unflatten(p.flat()).equal(p)


def test_finite_diff_on_quadratic():
    p = toy_params()
    fd = finite_diff_grad(lambda q: 0.5 * dot(q, q), p)
    assert rel_err(fd.flat(), p.flat()) < 1e-9


def _grad_check(build, values, seed=0):
    """Compare tape gradients of ``build(*leaves)`` with central differences."""
    tape = Tape()
    leaves = [tape.leaf(v) for v in values]
    out = build(*leaves)
    tape.backward(out)
    for i, v in enumerate(values):
        fd = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            plus = [x.copy() for x in values]
            minus = [x.copy() for x in values]
            plus[i][idx] += 1e-5
            minus[i][idx] -= 1e-5
            fp = build(*[T.const(x) for x in plus]).value
            fm = build(*[T.const(x) for x in minus]).value
            fd[idx] = (fp - fm) / 2e-5
        assert rel_err(leaves[i].grad, fd) < 1e-6, f"input {i}"


@pytest.mark.parametrize(
    "build,shapes",
    [
        (lambda a, b, c: T.weighted_sum([(0.3, T.pick_nll(T.log_softmax(T.add(T.matmul(a, b), c)), [0, 2])), (0.7, T.pick_nll(T.log_softmax(a), [1, 1]))]), [(2, 3), (3, 3), (3,)]),
        (lambda x, g, b: T.soft_cross_entropy(T.log_softmax(T.layer_norm(x, g, b)), np.full((3, 4), 0.25)), [(3, 4), (4,), (4,)]),
        (lambda x, w: T.pick_nll(T.log_softmax(T.matmul(T.temporal_context(T.tanh(x)), w)), [1, 0, 2, 1]), [(4, 2), (6, 3)]),
        (lambda q, k, v: T.pick_nll(T.log_softmax(T.attention(q, k, v)), [0, 1]), [(2, 3), (5, 3), (5, 3)]),
        (lambda a, t: T.pick_nll(T.log_softmax(T.vstack([T.gather_rows(t, [2, 0]), a])), [0, 1, 1]), [(1, 3), (3, 3)]),
        (lambda x: T.ctc_nll(T.log_softmax(x), [0, 1], blank=2, norm=2.0), [(5, 3)]),
        (lambda x: T.pick_nll(T.log_softmax(T.scale(T.transpose(x), 0.7)), [0, 1, 1]), [(2, 3)]),
    ],
)
def test_tape_ops_match_finite_differences(build, shapes, rng):
    _grad_check(build, [rng.normal(size=s) for s in shapes])


def test_constant_subgraph_stays_off_tape(rng):
    tape = Tape()
    x = tape.leaf(rng.normal(size=(2, 3)))
    teacher = T.softmax(T.const(rng.normal(size=(2, 3))))
    assert not teacher.tracked
    n_before = len(tape.nodes)
    out = T.soft_cross_entropy(T.log_softmax(x), teacher.value)
    assert len(tape.nodes) > n_before
    tape.backward(out)
    assert x.grad is not None


def test_backward_requires_finite_scalar(rng):
    tape = Tape()
    x = tape.leaf(rng.normal(size=3))
    with pytest.raises(ValueError):
        tape.backward(T.tanh(x))
