import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedsim import _pykernels, kernels

BACKENDS = kernels.backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


def test_path_totals_reference():
    out = _pykernels.path_totals(np.array([[1.0, 2.0], [3.0, 0.0]]), np.array([[1.0, 2.0], [3.0, 1.0]]))
    assert list(out) == [2.0, 1.0]


@needs_ext
@settings(max_examples=200)
@given(st.integers(0, 40), st.integers(1, 8), st.integers(0, 2**31))
def test_path_totals_bit_identical(rows, cols, seed):
    rng = np.random.default_rng(seed)
    num = rng.uniform(0, 100, (rows, cols))
    den = rng.uniform(0.1, 10, (rows, cols))
    a = BACKENDS["python"].path_totals(num, den)
    b = BACKENDS["cython"].path_totals(num, den)
    assert a.tobytes() == b.tobytes()


@needs_ext
@settings(max_examples=300)
@given(st.lists(st.floats(0, 1e4), max_size=30), st.floats(0, 1e4), st.floats(0, 10), st.floats(0, 1e5),
       st.booleans())
def test_greedy_bit_identical(d, cap, price, budget, integral):
    demand = np.array(d, dtype=float)
    capv = np.full(len(d), cap)
    a = BACKENDS["python"].greedy_outsource(demand, capv, price, budget, integral)
    b = BACKENDS["cython"].greedy_outsource(demand, capv, price, budget, integral)
    for x, y in zip(a[:4], b[:4]):
        assert x.tobytes() == y.tobytes()
    assert a[4] == b[4]


@pytest.mark.parametrize("mod", sorted(BACKENDS))
def test_shape_errors(mod):
    k = BACKENDS[mod]
    with pytest.raises(ValueError):
        k.greedy_outsource(np.zeros(3), np.zeros(2), 1.0, 1.0)
    with pytest.raises(ValueError):
        k.path_totals(np.zeros((2, 3)), np.ones((3, 2)))


def test_readonly_inputs_accepted():
    d = np.broadcast_to(np.array(5.0), (3,))
    for k in BACKENDS.values():
        local, *_ = k.greedy_outsource(d, d, 1.0, 1.0)
        assert list(local) == [5.0] * 3
