import numpy as np
import pytest

from ramgnn import autodiff as ad
from instances import PRIMITIVE_BUILDERS


def brute_circ_corr(a, b):
    d = len(a)
    return np.array([sum(a[i] * b[(i + k) % d] for i in range(d)) for k in range(d)])


def test_every_registered_primitive_has_a_gradient_case():
    covered = {name.split("[")[0] for name in PRIMITIVE_BUILDERS}
    assert set(ad.PRIMITIVES) <= covered


@pytest.mark.parametrize("name", sorted(PRIMITIVE_BUILDERS))
def test_primitive_gradient_matches_central_differences(name):
    for seed in range(20):
        params, f = PRIMITIVE_BUILDERS[name](np.random.default_rng(seed))
        assert ad.grad_check(f, params) < 1e-6, (name, seed)


def test_sigmoid_gradient_at_zero():
    x = ad.param([0.0])
    grads = ad.backward(ad.sum_(ad.sigmoid(x)))
    assert grads[x][0] == pytest.approx(0.25)


def test_circular_correlation_small_case():
    out = ad.circ_corr(ad.const([1.0, 2.0]), ad.const([3.0, 4.0])).value
    np.testing.assert_allclose(out, [11.0, 10.0])


def test_circular_correlation_matches_brute_force(rng):
    for _ in range(25):
        d = int(rng.integers(1, 9))
        a, b = rng.normal(size=d), rng.normal(size=d)
        np.testing.assert_allclose(ad.circ_corr(ad.const(a), ad.const(b)).value, brute_circ_corr(a, b), atol=1e-12)


def test_circular_correlation_table_form_matches_rowwise(rng):
    a = rng.normal(size=(7, 6))
    table = rng.normal(size=(3, 6))
    index = rng.integers(0, 3, 7)
    out = ad.circ_corr(ad.const(a), ad.const(table), index=index).value
    expected = np.stack([brute_circ_corr(a[m], table[index[m]]) for m in range(7)])
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_leaky_relu_slope():
    x = ad.param([-2.0, 3.0])
    out = ad.leaky_relu(x)
    np.testing.assert_allclose(out.value, [-0.02, 3.0])
    grads = ad.backward(ad.sum_(out))
    np.testing.assert_allclose(grads[x], [0.01, 1.0])


def test_segmented_softmax_normalizes_per_segment(rng):
    x = ad.const(rng.normal(size=6))
    seg = np.array([0, 0, 1, 1, 1, 3])
    p = ad.softmax(x, segments=seg).value
    np.testing.assert_allclose(np.bincount(seg, weights=p, minlength=4)[[0, 1, 3]], 1.0)


def test_segment_mean_of_empty_segment_is_zero():
    out = ad.segment_sum(ad.const(np.ones((2, 3))), np.array([0, 0]), 3, mean=True).value
    np.testing.assert_allclose(out, [[1, 1, 1], [0, 0, 0], [0, 0, 0]])


def test_leaf_gradients_accumulate_over_reuse():
    x = ad.param([1.0, 2.0])
    y = ad.add(ad.hadamard(x, x), x)
    grads = ad.backward(ad.sum_(y))
    np.testing.assert_allclose(grads[x], [3.0, 5.0])


def test_backward_requires_scalar_root():
    with pytest.raises(ValueError):
        ad.backward(ad.param(np.ones(3)))


@pytest.mark.parametrize("tag, build", [
    ("matmul", lambda: ad.matmul(ad.const(np.ones((2, 3))), ad.const(np.ones((2, 3))))),
    ("matvec", lambda: ad.matvec(ad.const(np.ones((2, 3))), ad.const(np.ones(2)))),
    ("hadamard", lambda: ad.hadamard(ad.const(np.ones(3)), ad.const(np.ones(4)))),
    ("circ_corr", lambda: ad.circ_corr(ad.const(np.ones(3)), ad.const(np.ones(4)))),
    ("gather", lambda: ad.gather(ad.const(np.ones((3, 2))), np.array([5]))),
])
def test_shape_errors_name_the_primitive(tag, build):
    with pytest.raises(ad.ShapeError, match=tag):
        build()


def test_unknown_tag_rejected():
    with pytest.raises(ValueError, match="no-such-op"):
        ad.apply_primitive("no-such-op", [ad.const(1.0)])


def test_operator_sugar_maps_to_primitives():
    a, b = ad.param([1.0, 2.0]), ad.param([3.0, 4.0])
    y = ad.sum_(a * b - a + 2.0 * b)
    grads = ad.backward(y)
    np.testing.assert_allclose(grads[a], [2.0, 3.0])
    np.testing.assert_allclose(grads[b], [3.0, 4.0])
