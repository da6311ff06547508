import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fslkit import kernels
from fslkit.kernels import available_backends, load_backend

BACKENDS = available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
seeds16 = st.binary(min_size=16, max_size=16)


def test_selected_backend_is_available():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


def test_unknown_backend():
    with pytest.raises(ValueError):
        load_backend("fortran")


@needs_both
@given(seeds16)
def test_prg_expand_equal(seed):
    c, p = load_backend("cython"), load_backend("python")
    assert c.prg_expand(seed) == p.prg_expand(seed)


@needs_both
@given(seeds16, seeds16, st.integers(1, 20), st.data())
def test_gen_tree_equal(s0, s1, depth, data):
    alpha = data.draw(st.integers(0, (1 << depth) - 1))
    c, p = load_backend("cython"), load_backend("python")
    assert c.gen_tree(s0, s1, alpha, depth) == p.gen_tree(s0, s1, alpha, depth)


@needs_both
@given(seeds16, st.integers(0, 1), st.integers(1, 12), st.data())
def test_eval_path_and_full_equal(root, t, depth, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    cws = rng.integers(0, 256, (1, depth, 16), dtype=np.uint8)
    bits = rng.integers(0, 4, (1, depth), dtype=np.uint8)
    roots = np.frombuffer(root, dtype=np.uint8).reshape(1, 16)
    ts = np.array([t], dtype=np.uint8)
    c, p = load_backend("cython"), load_backend("python")
    cs, cb = c.eval_full_many(roots, ts, cws, bits, depth)
    ps, pb = p.eval_full_many(roots, ts, cws, bits, depth)
    assert np.array_equal(cs, ps) and np.array_equal(cb, pb)
    x = data.draw(st.integers(0, (1 << depth) - 1))
    seed, tx = c.eval_path(root, t, cws[0].tobytes(), bits[0].tobytes(), x, depth)
    assert (seed, tx) == p.eval_path(root, t, cws[0].tobytes(), bits[0].tobytes(), x, depth)
    assert seed == cs[0, x].tobytes() and tx == cb[0, x]


@needs_both
@given(st.integers(1, 40), st.sampled_from([4, 16, 48]), st.integers(0, 5))
def test_convert_and_ro_equal(n, nbytes, epoch):
    leaves = np.random.default_rng(n).integers(0, 256, (n, 16), dtype=np.uint8)
    c, p = load_backend("cython"), load_backend("python")
    assert np.array_equal(c.convert_many(leaves, nbytes), p.convert_many(leaves, nbytes))
    assert np.array_equal(c.ro_hash_many(leaves, epoch, nbytes), p.ro_hash_many(leaves, epoch, nbytes))


@pytest.mark.parametrize("name", BACKENDS)
def test_full_expansion_matches_pointwise_prg(name):
    # level-by-level expansion by hand, no correction words
    k = load_backend(name)
    root = bytes(range(16))
    depth = 3
    cws = np.zeros((1, depth, 16), dtype=np.uint8)
    bits = np.zeros((1, depth), dtype=np.uint8)
    seeds, _ = k.eval_full_many(np.frombuffer(root, dtype=np.uint8).reshape(1, 16), np.zeros(1, np.uint8), cws, bits, depth)
    level = [root]
    for _ in range(depth):
        level = [child for s in level for child in k.prg_expand(s)[0::2]]
    assert [seeds[0, i].tobytes() for i in range(8)] == level
