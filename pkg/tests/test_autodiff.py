import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cagat import autodiff as ad


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def tape_grad(build, x):
    v = ad.Var(x.copy(), requires_grad=True)
    with ad.Tape() as tape:
        loss = build(v)
    tape.backward(loss)
    return v.grad


UNARY = {
    "leaky_relu": ad.leaky_relu,
    "relu": ad.relu,
    "elu": ad.elu,
    "exp": ad.exp,
    "transpose": ad.transpose,
    "scale": lambda a: ad.scale(a, -2.5),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_match_finite_differences(name, rng):
    op = UNARY[name]
    # keep away from the kinks at 0
    x = rng.normal(size=(3, 4))
    x[np.abs(x) < 0.05] = 0.3
    weights = rng.normal(size=op(ad.Var(x)).shape)

    def f(a):
        return float((op(ad.Var(a)).value * weights).sum())

    analytic = tape_grad(lambda v: ad.total(ad.mul(op(v), ad.Var(weights))), x)
    np.testing.assert_allclose(analytic, numeric_grad(f, x.copy()), rtol=1e-6, atol=1e-8)


def test_matmul_gradients_both_sides(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    va, vb = ad.Var(a, requires_grad=True), ad.Var(b, requires_grad=True)
    with ad.Tape() as tape:
        loss = ad.total(va @ vb)
    tape.backward(loss)
    np.testing.assert_allclose(va.grad, np.ones((3, 2)) @ b.T)
    np.testing.assert_allclose(vb.grad, a.T @ np.ones((3, 2)))


def test_matmul_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        ad.matmul(ad.Var(np.ones((2, 3))), ad.Var(np.ones((2, 3))))


def test_log_domain_error():
    with pytest.raises(ad.DomainError):
        ad.log(ad.Var(np.array([[1.0, -1.0]])))


def test_leaky_relu_slope_and_kink():
    out = ad.leaky_relu(ad.Var(np.array([[-1.0, 0.0, 2.0]]))).value
    np.testing.assert_array_equal(out, [[-0.2, 0.0, 2.0]])
    v = ad.Var(np.zeros((1, 1)), requires_grad=True)
    with ad.Tape() as tape:
        y = ad.leaky_relu(v)
    tape.backward(y)
    assert v.grad[0, 0] == 1.0


def test_nonfinite_raises():
    with pytest.raises(ad.NumericError):
        ad.exp(ad.Var(np.array([[1000.0]])))


def test_gradients_accumulate_over_fanout(rng):
    x = rng.normal(size=(2, 2))
    g = tape_grad(lambda v: ad.total(v + v + ad.mul(v, v)), x)
    np.testing.assert_allclose(g, 2 + 2 * x)


def test_no_recording_outside_tape(rng):
    v = ad.Var(rng.normal(size=(2, 2)), requires_grad=True)
    out = ad.exp(v)
    assert not out.requires_grad


def test_cross_entropy_matches_loops(rng):
    from cagat.reference import cross_entropy_loops

    logits = rng.normal(size=(6, 3))
    labels = rng.integers(0, 3, size=6)
    mask = np.array([0, 2, 5])
    val = ad.masked_cross_entropy(ad.Var(logits), labels, mask).item()
    assert abs(val - cross_entropy_loops(logits, labels, mask)) < 1e-12
    g = tape_grad(lambda v: ad.masked_cross_entropy(v, labels, mask), logits)
    num = numeric_grad(lambda a: cross_entropy_loops(a, labels, mask), logits.copy())
    np.testing.assert_allclose(g, num, atol=1e-8)
    assert np.all(g[[1, 3, 4]] == 0)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        ad.masked_cross_entropy(ad.Var(np.zeros((2, 2))), np.array([0, 5]), np.array([1]))
    with pytest.raises(ValueError):
        ad.masked_cross_entropy(ad.Var(np.zeros((2, 2))), np.array([0, 1]), np.array([], dtype=int))


def test_gather_rows_scatter_adds(rng):
    x = rng.normal(size=(4, 2))
    idx = np.array([0, 0, 3])
    g = tape_grad(lambda v: ad.total(ad.gather_rows(v, idx)), x)
    np.testing.assert_array_equal(g[:, 0], [2, 0, 0, 1])


def test_dropout_is_identity_without_rng(rng):
    v = ad.Var(rng.normal(size=(3, 3)))
    assert ad.dropout(v, 0.6, None) is v
    out = ad.dropout(v, 0.5, np.random.default_rng(0)).value
    kept = out != 0
    np.testing.assert_allclose(out[kept], 2 * v.value[kept])


def small_pattern():
    m = sp.csr_matrix(np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float))
    return ad.SparsePattern.from_scipy(m)


def test_segment_softmax_rows_sum_to_one(rng):
    p = small_pattern()
    out = ad.segment_softmax(p, ad.Var(rng.normal(size=(p.nnz, 1)))).value
    np.testing.assert_allclose(p.densify(out).sum(axis=1), 1.0)


def test_segment_softmax_gradient(rng):
    p = small_pattern()
    x = rng.normal(size=(p.nnz, 1))
    w = rng.normal(size=(p.nnz, 1))

    def f(a):
        return float((ad.segment_softmax(p, ad.Var(a)).value * w).sum())

    g = tape_grad(lambda v: ad.total(ad.mul(ad.segment_softmax(p, v), ad.Var(w))), x)
    np.testing.assert_allclose(g, numeric_grad(f, x.copy()), atol=1e-8)


def test_empty_segment_rejected():
    m = sp.csr_matrix(np.array([[1.0, 0], [0, 0]]))
    p = ad.SparsePattern.from_scipy(m)
    with pytest.raises(ValueError):
        ad.segment_softmax(p, ad.Var(np.ones((1, 1))))


def test_spmm_and_masked_sandwich_gradients(rng):
    p = small_pattern()
    left = sp.csr_matrix(rng.random((3, 3)))
    d = rng.normal(size=(3, 2))
    vals = rng.normal(size=(p.nnz, 1))

    def loss_spmm(v):
        return ad.total(ad.spmm(ad.SparseMatrix(p, v), ad.Var(d)))

    def f_spmm(a):
        return float((p.densify(a.ravel()) @ d).sum())

    np.testing.assert_allclose(tape_grad(loss_spmm, vals), numeric_grad(f_spmm, vals.copy()), atol=1e-8)

    w = rng.normal(size=(p.nnz, 1))

    def f_sand(a):
        full = left.toarray() @ p.densify(a.ravel()) @ left.toarray().T
        return float((p.sample(full).reshape(-1, 1) * w).sum())

    g = tape_grad(lambda v: ad.total(ad.mul(ad.masked_sandwich(p, left, v), ad.Var(w))), vals)
    np.testing.assert_allclose(g, numeric_grad(f_sand, vals.copy()), atol=1e-8)


def test_dense_sandwich(rng):
    l, s = rng.random((4, 4)), rng.normal(size=(4, 4))
    np.testing.assert_allclose(ad.sandwich(l, ad.Var(s)).value, l @ s @ l.T)
    np.testing.assert_allclose(ad.sandwich(sp.csr_matrix(l), ad.Var(s)).value, l @ s @ l.T)


def test_pattern_validation():
    with pytest.raises(ValueError):
        ad.SparsePattern(2, 2, [0, 1], [0])
    with pytest.raises(ValueError):
        ad.SparsePattern(2, 2, [0, 1, 2], [0, 5])


def test_adam_first_step_moves_by_lr():
    store = ad.ParamStore()
    p = store.add("w", np.array([[1.0, -1.0]]))
    p.grad = np.array([[3.0, -0.5]])
    ad.adam_step(store, lr=0.01)
    np.testing.assert_allclose(p.value, [[0.99, -0.99]], atol=1e-9)
    assert np.all(p.grad == 0)


def test_adam_weight_decay_modes():
    for decoupled in (True, False):
        store = ad.ParamStore()
        p = store.add("w", np.array([[2.0]]))
        ad.adam_step(store, lr=0.1, weight_decay=0.5, decoupled=decoupled)
        assert p.value[0, 0] < 2.0


def test_glorot_bounds(rng):
    w = ad.glorot_init(30, 20, rng)
    assert np.abs(w).max() <= np.sqrt(6 / 50)
    with pytest.raises(ValueError):
        ad.glorot_init(0, 3, rng)


def test_grad_check_detects_corruption(rng):
    store = ad.ParamStore()
    w = store.add("w", rng.normal(size=(3, 2)))
    x = ad.Var(rng.normal(size=(4, 3)))
    f = lambda: ad.total(ad.elu(x @ w))  # noqa: E731
    assert ad.grad_check(f, [w]) < 1e-6
    with ad.corrupt_backward("matmul", 1.1):
        assert ad.grad_check(f, [w]) > 0.05


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
def test_concat_and_slice_roundtrip(r, c, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(r, c)), rng.normal(size=(r, 2))
    cat = ad.concat_cols([ad.Var(a), ad.Var(b)]).value
    np.testing.assert_array_equal(cat, np.hstack([a, b]))
    np.testing.assert_array_equal(ad.slice_rows(ad.Var(a), 0, r).value, a)


def test_param_store_snapshot_load(rng):
    store = ad.ParamStore()
    store.add("a", rng.normal(size=(2, 2)))
    snap = store.snapshot()
    store["a"].value = store["a"].value + 1
    store.load(snap)
    np.testing.assert_array_equal(store["a"].value, snap["a"])
    with pytest.raises(ad.ShapeError):
        store.load({"a": np.zeros((3, 3))})
    with pytest.raises(KeyError):
        store.add("a", np.zeros(1))
