import numpy as np
import pytest

from hanet.attention import (HAConfig, HAParams, aggregate, attention_propagation, attention_row_image,
                             dense_power_propagation, dense_similarity, ha_backward, ha_forward,
                             masked_row_softmax, normalize_minmax)
from hanet.errors import ConfigError, DimensionError, NumericError, StateError
from hanet.graph import BoolAdjacency
from hanet.tensor import grad_check
from oracles import brute_force_ha, naive_matmul, softmax_rows, vanilla_attention


def random_params(rng, c, n):
    # nonzero biases so the bias paths are exercised
    return HAParams.init(c, n, rng).map(lambda v: v + 0.1 * rng.normal(size=v.shape))


def test_similarity_example():
    p = HAParams.identity(1, 1)
    a = dense_similarity(np.array([[1.0, 2.0]]), p)
    assert np.array_equal(a, [[1.0, 2.0], [2.0, 4.0]])


def test_similarity_scale_is_inverse_sqrt_c():
    p = HAParams.identity(64, 1)
    x = np.zeros((64, 2))
    x[0] = [1.0, 1.0]
    assert dense_similarity(x, p)[0, 0] == 0.125


def test_similarity_matches_matmul_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 9))
    p = random_params(rng, 5, 1)
    q = naive_matmul(p.wq, x) + p.bq[:, None]
    k = naive_matmul(p.wk, x)
    np.testing.assert_allclose(dense_similarity(x, p), naive_matmul(q.T, k) / np.sqrt(5), atol=1e-12)


def test_minmax_examples():
    np.testing.assert_allclose(normalize_minmax([[1, 3], [2, 4]]), [[0, 2 / 3], [1 / 3, 1]])
    assert np.array_equal(normalize_minmax(np.full((3, 3), 7.0)), np.zeros((3, 3)))
    out = normalize_minmax(np.random.default_rng(1).normal(size=(6, 6)))
    assert out.min() == 0.0 and out.max() == 1.0


def test_propagation_delta_zero_is_unmasked():
    a = np.random.default_rng(2).normal(size=(6, 6))
    masks, levels = attention_propagation(a, normalize_minmax(a), HAConfig(delta=0.0, n=1))
    assert masks[0].edge_count() == 36
    assert np.array_equal(levels[0], a)


def test_propagation_delta_one_keeps_diagonal():
    a = np.random.default_rng(3).normal(size=(5, 5))
    masks, _ = attention_propagation(a, normalize_minmax(a), HAConfig(delta=1.0, n=1))
    dense = masks[0].to_dense()
    assert np.array_equal(dense & ~np.eye(5, dtype=bool), normalize_minmax(a) == 1.0)


def test_propagation_three_node_chain():
    # only 0->1 and 1->2 pass the threshold; the second level adds exactly (0, 2)
    a_norm = np.array([[0.0, 0.9, 0.1], [0.2, 0.0, 0.8], [0.3, 0.1, 1.0]])
    a_star = np.arange(9.0).reshape(3, 3) + 1
    masks, levels = attention_propagation(a_star, a_norm, HAConfig(delta=0.5, n=2))
    added = masks[1].to_dense() & ~masks[0].to_dense()
    assert np.argwhere(added).tolist() == [[0, 2]]
    assert levels[1][0, 2] == a_star[0, 2]
    assert levels[0][0, 2] == 0.0


def test_propagation_rejects_dense_mode():
    with pytest.raises(ConfigError):
        attention_propagation(np.eye(2), np.eye(2), HAConfig(mode="dense-power"))


def test_dense_power_examples():
    cfg = HAConfig(mode="dense-power", n=3)
    eye = np.eye(4)
    assert all(np.array_equal(lv, eye) for lv in dense_power_propagation(eye, cfg))
    a = np.random.default_rng(4).normal(size=(4, 4))
    levels = dense_power_propagation(a, cfg)
    np.testing.assert_allclose(levels[2], naive_matmul(naive_matmul(a, a), a), atol=1e-12)
    assert np.array_equal(dense_power_propagation(a, HAConfig(mode="dense-power", n=1))[0], a)


def test_masked_softmax_examples():
    mask = BoolAdjacency.from_dense(np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=bool))
    out = masked_row_softmax(np.array([[0.7, 5.0, 0.7], [1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]), mask)
    assert np.array_equal(out[0], [0.5, 0.0, 0.5])
    assert np.array_equal(out[1], [0.0, 1.0, 0.0])


def test_masked_softmax_matches_direct_formula():
    rng = np.random.default_rng(5)
    for _ in range(50):
        v = rng.normal(size=(8, 8))
        m = rng.random((8, 8)) < 0.4
        np.fill_diagonal(m, True)
        expected = np.where(m, np.exp(v), 0.0)
        expected /= expected.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(masked_row_softmax(v, m), expected, atol=1e-14)


def test_masked_softmax_empty_row():
    with pytest.raises(StateError):
        masked_row_softmax(np.zeros((2, 2)), np.array([[True, False], [False, False]]))


def test_aggregate_identity_and_permutation():
    rng = np.random.default_rng(6)
    h = rng.normal(size=(3, 5))
    p = HAParams.identity(3, 1)
    assert np.array_equal(aggregate(h, [np.eye(5)], p), h)
    perm = rng.permutation(5)
    # row i of the map is one-hot at perm[i]: position i reads position perm[i]
    np.testing.assert_array_equal(aggregate(h, [np.eye(5)[perm]], p), h[:, perm])


def test_aggregate_matches_oracle_composition():
    rng = np.random.default_rng(7)
    h = rng.normal(size=(4, 6))
    p = random_params(rng, 4, 2)
    levels = [softmax_rows(rng.normal(size=(6, 6))) for _ in range(2)]
    parts = [naive_matmul(w, naive_matmul(h, a.T)) + b[:, None]
             for a, w, b in zip(levels, p.w_level, p.b_level)]
    expected = naive_matmul(p.w_fuse, np.vstack(parts)) + p.b_fuse[:, None]
    np.testing.assert_allclose(aggregate(h, levels, p), expected, atol=1e-12)
    with pytest.raises(ConfigError):
        aggregate(h, levels[:1], p)


def test_reduces_to_one_level_attention():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(20):
        c, L = int(rng.integers(1, 9)), int(rng.integers(1, 65))
        x = rng.normal(size=(c, L))
        p = random_params(rng, c, 1)
        out, _ = ha_forward(x, p, HAConfig(delta=0.0, n=1, c=c))
        worst = max(worst, np.abs(out - vanilla_attention(x, p)).max())
    assert worst <= 1e-10


def test_matches_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(5):
        x = rng.normal(size=(2, 4))
        p = random_params(rng, 2, 2)
        out, _ = ha_forward(x, p, HAConfig(delta=0.5, n=2, c=2))
        np.testing.assert_allclose(out, brute_force_ha(x, p, 0.5, 2), atol=1e-12)


def test_zero_input_zero_output():
    p = HAParams.init(4, 2, np.random.default_rng(10))
    out, _ = ha_forward(np.zeros((4, 7)), p, HAConfig(c=4))
    assert np.array_equal(out, np.zeros((4, 7)))


def test_rejects_bad_input():
    p = HAParams.identity(2, 1)
    with pytest.raises(NumericError):
        ha_forward(np.array([[0.0, np.nan], [1.0, 1.0]]), p, HAConfig(c=2, n=1))
    with pytest.raises(DimensionError):
        ha_forward(np.zeros((2, 2, 2)), p, HAConfig(c=2, n=1))


def _random_case(rng):
    c, L, n = int(rng.integers(1, 6)), int(rng.integers(2, 30)), int(rng.integers(1, 4))
    cfg = HAConfig(delta=float(rng.uniform(0.2, 0.9)), n=n, c=c)
    return rng.normal(size=(c, L)), random_params(rng, c, n), cfg


def test_bundle_invariants():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x, p, cfg = _random_case(rng)
        _, bundle = ha_forward(x, p, cfg)
        prev = None
        for mask, a in zip(bundle.masks, bundle.a_levels):
            dense = mask.to_dense()
            assert np.all(a[~dense] == 0.0)
            np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-9)
            if prev is not None:
                assert not (prev & ~dense).any()
            prev = dense


def test_permutation_equivariance():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        x, p, cfg = _random_case(rng)
        perm = rng.permutation(x.shape[1])
        out, _ = ha_forward(x, p, cfg)
        out_p, _ = ha_forward(x[:, perm], p, cfg)
        worst = max(worst, np.abs(out_p - out[:, perm]).max())
    assert worst <= 1e-9


def test_dense_power_n1_equals_masked_delta0():
    rng = np.random.default_rng(13)
    for _ in range(10):
        x = rng.normal(size=(3, 12))
        p = random_params(rng, 3, 1)
        a, _ = ha_forward(x, p, HAConfig(mode="dense-power", n=1, c=3))
        b, _ = ha_forward(x, p, HAConfig(delta=0.0, n=1, c=3))
        np.testing.assert_allclose(a, b, atol=1e-12)


def _grad_errors(x, p, cfg, upstream):
    _, bundle = ha_forward(x, p, cfg)
    masks = bundle.masks
    grads = ha_backward(bundle, upstream)

    def value(xx, pp):
        return float((ha_forward(xx, pp, cfg, masks)[0] * upstream).sum())

    errors = {"x": grad_check(lambda v: (value(v, p), grads["x"]), x)}
    named = p.named()
    for name, arr in named.items():
        def f(v, name=name):
            return value(x, HAParams.from_named({**named, name: v})), grads[name]
        errors[name] = grad_check(f, arr)
    return errors


@pytest.mark.parametrize("mode", ["masked", "dense-power"])
def test_grad_check_every_tensor(mode):
    rng = np.random.default_rng(14)
    c, L = 3, 6
    x = rng.uniform(-1, 1, (c, L))
    p = HAParams.init(c, 2, rng).map(lambda v: rng.uniform(-1, 1, v.shape))
    cfg = HAConfig(delta=0.5, n=2, c=c, mode=mode)
    for upstream in (np.ones((c, L)), rng.normal(size=(c, L))):
        errors = _grad_errors(x, p, cfg, upstream)
        assert set(errors) == {"x"} | set(p.named())
        assert max(errors.values()) < 1e-4, errors


def test_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(15)
    x, p, cfg = _random_case(rng)
    _, bundle = ha_forward(x, p, cfg)
    assert all(not g.any() for g in ha_backward(bundle, np.zeros_like(x)).values())


def test_backward_needs_bundle():
    with pytest.raises(StateError):
        ha_backward(None, np.zeros((1, 1)))


def test_attention_row_image():
    a = np.array([[0.25, 0.5, 0.0, 0.25]] * 4)
    img = attention_row_image(a, 1, (2, 2))
    assert img.dtype == np.uint8
    assert img.tolist() == [[128, 255], [0, 128]]
