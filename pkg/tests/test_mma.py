import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigopt.mma import MMAState, mma_step


def minimize(f, x0, lo, hi, steps, move=0.05, cons=None, m=1):
    """Drive ``mma_step``; ``f`` returns (f0, df0) and ``cons`` (fval, dfdx)."""
    x = np.asarray(x0, dtype=float)
    state = MMAState(n=x.size, m=m, move=move)
    trace = [x]
    for _ in range(steps):
        f0, df0 = f(x)
        if cons is None:
            fval, dfdx = np.full(m, -1.0), np.zeros((m, x.size))
        else:
            fval, dfdx = cons(x)
        x = mma_step(state, x, f0, df0, fval, dfdx, lo, hi)
        trace.append(x)
    return x, np.array(trace), state


def test_quadratic():
    x, _, _ = minimize(lambda x: ((x[0] - 0.5) ** 2, 2 * (x - 0.5)), [0.05], 0.0, 1.0, 50)
    assert abs(x[0] - 0.5) <= 1e-3


def test_linear_program_vertex():
    # min -x1 - 2 x2  s.t.  x1 + x2 <= 1  on [0, 1]^2  ->  (0, 1)
    f = lambda x: (-x[0] - 2 * x[1], np.array([-1.0, -2.0]))
    c = lambda x: (np.array([x[0] + x[1] - 1.0]), np.array([[1.0, 1.0]]))
    x, _, _ = minimize(f, [0.5, 0.2], 0.0, 1.0, 80, cons=c)
    np.testing.assert_allclose(x, [0.0, 1.0], atol=1e-3)


def test_constrained_quadratic():
    # min (x1-1)^2 + (x2-1)^2  s.t.  x1 + x2 <= 1  ->  (0.5, 0.5)
    f = lambda x: (np.sum((x - 1) ** 2), 2 * (x - 1))
    c = lambda x: (np.array([x.sum() - 1.0]), np.ones((1, 2)))
    x, _, _ = minimize(f, [0.1, 0.3], 0.0, 2.0, 100, cons=c)
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-3)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.01, 0.3))
def test_move_limit_respected(center, move):
    lo, hi = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 4.0, 2.5])
    target = lo + (hi - lo) * (np.tanh(center) + 1) / 2
    f = lambda x: (np.sum((x - target) ** 2), 2 * (x - target))
    _, trace, _ = minimize(f, lo + 0.1 * (hi - lo), lo, hi, 15, move=move)
    steps = np.abs(np.diff(trace, axis=0))
    assert np.all(steps <= move * (hi - lo) + 1e-12)
    assert np.all(trace >= lo) and np.all(trace <= hi)


def test_subproblem_residual_small():
    _, _, state = minimize(lambda x: ((x[0] - 0.3) ** 2, 2 * (x - 0.3)), [0.9], 0.0, 1.0, 3)
    assert state.kkt_residual <= 1e-9


def test_inconsistent_dimensions():
    state = MMAState(n=2, m=1)
    with pytest.raises(ValueError):
        mma_step(state, np.zeros(2), 0.0, np.zeros(3), [0.0], np.zeros((1, 2)), 0, 1)
    with pytest.raises(ValueError):
        mma_step(state, np.zeros(2), 0.0, np.zeros(2), [0.0], np.zeros((1, 2)), -np.inf, 1)
