import numpy as np
import pytest

from sgnn.errors import NumericError
from sgnn.optim import OptimState, apply_update, batch_iterator


def test_sgd_step():
    st = OptimState(kind="sgd", lr=0.1)
    assert apply_update(st, np.array([[1.0]]), np.array([[1.0]]))[0, 0] == pytest.approx(0.9)
    assert st.step_count == 1
    p = np.array([[2.0]])
    assert np.array_equal(apply_update(st, p, np.zeros((1, 1))), p)


def test_adam_first_step_is_lr_sign():
    st = OptimState(lr=0.01)
    g = np.array([[3.0, -0.2], [1e-3, -50.0]])
    out = apply_update(st, np.zeros((2, 2)), g)
    assert np.allclose(out, -0.01 * np.sign(g), rtol=1e-4)
    st = OptimState(lr=0.01)
    assert np.abs(apply_update(st, np.ones((1, 1)), np.zeros((1, 1))) - 1.0).max() <= 1e-8


def test_adam_matches_closed_form_sequence():
    rng = np.random.default_rng(0)
    grads = rng.standard_normal((5, 3))
    st = OptimState(lr=0.05)
    p = np.zeros((1, 3))
    m = v = np.zeros(3)
    ref = np.zeros(3)
    for t, g in enumerate(grads, start=1):
        p = apply_update(st, p, g[None, :])
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(p[0], ref, atol=1e-14)


def test_non_finite_gradient_names_parameter():
    with pytest.raises(NumericError, match="W2"):
        apply_update(OptimState(name="W2"), np.zeros(2), np.array([np.nan, 0.0]))


def test_batch_iterator():
    b = batch_iterator(4, 2, seed=7)
    assert len(b) == 2 and sorted(np.concatenate(b)) == [0, 1, 2, 3]
    assert [list(x) for x in batch_iterator(9, 4, 1, 2)] == [list(x) for x in batch_iterator(9, 4, 1, 2)]
    assert [len(x) for x in batch_iterator(5, 2, 0)] == [2, 2, 1]
    assert not np.array_equal(np.concatenate(batch_iterator(50, 8, 0, 0)),
                              np.concatenate(batch_iterator(50, 8, 0, 1)))
