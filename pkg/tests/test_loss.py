import math

import numpy as np
import pytest

from arblab import loss as L
from arblab.errors import DimensionError
from arblab.numkit import Rng

from oracles import fd_gradient, naive_arb_probs, naive_loss, naive_mean_loss, naive_parts, naive_softmax, rel_error


# softmax

def test_softmax_symmetric():
    np.testing.assert_array_equal(L.softmax([0.0, 0.0]), [0.5, 0.5])


def test_softmax_no_overflow():
    p = L.softmax([1000.0, 0.0])
    assert p[0] == 1.0 and 0 <= p[1] < 1e-300 and np.all(np.isfinite(p))


def test_softmax_naive():
    np.testing.assert_allclose(L.softmax([1.0, 2.0, 3.0]), naive_softmax([1, 2, 3]), atol=1e-12, rtol=0)


# arb_softmax

def test_arb_softmax_uniform_is_softmax():
    z = Rng(0).normal(5)
    np.testing.assert_array_equal(L.arb_softmax(z, [4.0] * 5, 2), L.softmax(z))


def test_arb_softmax_rare_truth():
    np.testing.assert_allclose(L.arb_softmax([0.0, 0.0], [3, 1], 1), [0.25, 0.25], rtol=1e-15)


def test_arb_softmax_frequent_truth():
    np.testing.assert_allclose(L.arb_softmax([0.0, 0.0], [3, 1], 0), [0.75, 0.75], rtol=1e-15)


def test_arb_softmax_naive():
    rng = Rng(9)
    for _ in range(20):
        z = rng.normal(4)
        n = rng.gen.integers(1, 50, size=4)
        y = int(rng.gen.integers(0, 4))
        np.testing.assert_allclose(L.arb_softmax(z, n, y), naive_arb_probs(z, n, y), rtol=1e-12)


def test_arb_softmax_extreme_ratio():
    z = np.array([3.0, -2.0, 0.5])
    n = np.array([1e15, 1.0, 10.0])
    p = L.arb_softmax(z, n, 1)
    assert np.all(np.isfinite(p))
    # log-space branch: compare against log-domain oracle
    a = z + np.log(n) - np.log(n[1])
    ref = np.exp(z - (a.max() + np.log(np.exp(a - a.max()).sum())))
    np.testing.assert_allclose(p, ref, rtol=1e-12)


# losses

def test_ce_loss_uniform_logits():
    assert L.ce_loss([[0.0, 0.0]], [0]) == pytest.approx(math.log(2), abs=1e-15)


def test_ce_loss_confident():
    assert L.ce_loss([[50.0, 0.0, 0.0]], [0]) < 1e-20


def test_ce_loss_naive():
    Z = Rng(1).normal((4, 3))
    y = [0, 2, 1, 1]
    assert L.ce_loss(Z, y) == pytest.approx(naive_mean_loss(Z, y), abs=1e-12)


def test_arb_loss_uniform_equals_ce():
    rng = Rng(2)
    for _ in range(50):
        Z = rng.normal((6, 4))
        y = rng.gen.integers(0, 4, size=6)
        assert L.arb_loss(Z, y, [7] * 4) == pytest.approx(L.ce_loss(Z, y), abs=1e-15)


def test_arb_loss_hand_values():
    assert L.arb_loss([[0.0, 0.0]], [1], [3, 1]) == pytest.approx(math.log(4), abs=1e-15)
    assert L.arb_loss([[0.0, 0.0]], [0], [3, 1]) == pytest.approx(-math.log(0.75), abs=1e-15)
    assert round(L.arb_loss([[0.0, 0.0]], [1], [3, 1]), 6) == 1.386294
    assert round(L.arb_loss([[0.0, 0.0]], [0], [3, 1]), 6) == 0.287682


def test_arb_loss_naive():
    rng = Rng(3)
    for _ in range(30):
        Z = rng.normal((5, 4)) * 3
        y = rng.gen.integers(0, 4, size=5)
        n = rng.gen.integers(1, 1000, size=4)
        assert L.arb_loss(Z, y, n) == pytest.approx(naive_mean_loss(Z, y, n), abs=1e-12)


def test_arb_needs_counts():
    with pytest.raises(ValueError):
        L.sample_losses(L.ARB, [[0.0, 1.0]], [0])


def test_bad_kind():
    with pytest.raises(ValueError):
        L.sample_losses("focal", [[0.0, 1.0]], [0])


def test_logit_shape_mismatch():
    with pytest.raises(DimensionError):
        L.sample_losses(L.CE, [[0.0, 1.0]], [0, 1])


def test_batch_counts_absent_class_drops_out():
    z = np.array([0.3, -1.0, 2.0])
    got = L.sample_losses(L.ARB, z[None], [0], L.ClassCounts([2, 0, 5], "batch"))[0][0]
    ref = -math.log(math.exp(0.3) / (math.exp(0.3) + 2.5 * math.exp(2.0)))
    assert got == pytest.approx(ref, abs=1e-14)


def test_global_counts_must_be_positive():
    with pytest.raises(ValueError):
        L.ClassCounts([1, 0], "global")


# logit gradient

def test_ce_gradient_one_hot_limit():
    g = L.logit_gradient(L.CE, [800.0, 0.0, 0.0], 0)
    np.testing.assert_array_equal(g, [0.0, 0.0, 0.0])


def test_arb_gradient_hand_value():
    np.testing.assert_allclose(L.logit_gradient(L.ARB, [0.0, 0.0], 1, [3, 1]), [0.75, -0.75], rtol=1e-15)


@pytest.mark.parametrize("kind", L.KINDS)
def test_logit_gradient_fd(kind):
    rng = Rng(4)
    for _ in range(20):
        z = rng.normal(4) * 2
        y = int(rng.gen.integers(0, 4))
        n = rng.gen.integers(1, 100, size=4).astype(float)
        counts = n if kind == L.ARB else None
        g = L.logit_gradient(kind, z, y, counts)
        fd = fd_gradient(lambda v: naive_loss(v, y, counts), z)
        assert rel_error(g, fd) <= 1e-6


# classifier gradient and report

def test_report_zero_for_one_hot():
    H = np.array([[1.0, 2.0]])
    W = np.array([[900.0, 0.0], [0.0, 0.0]])
    rep = L.classifier_gradient(L.CE, H, [0], W)
    assert np.all(rep.parts == 0)


def test_report_empty_class_has_zero_column():
    rng = Rng(5)
    H, W = rng.normal((6, 3)), rng.normal((4, 3))
    rep = L.classifier_gradient(L.CE, H, [0, 1, 1, 3, 0, 3], W)
    assert np.all(rep.parts[:, 2, :] == 0)


@pytest.mark.parametrize("kind", L.KINDS)
def test_classifier_gradient_fd(kind):
    rng = Rng(6)
    H, W = rng.normal((6, 4)), rng.normal((3, 4))
    y = np.array([0, 1, 2, 2, 1, 0])
    n = np.array([50.0, 7.0, 2.0])
    counts = n if kind == L.ARB else None
    rep = L.classifier_gradient(kind, H, y, W, counts)
    fd = fd_gradient(lambda M: len(y) * naive_mean_loss(H @ M.T, y, counts), W)
    assert rel_error(rep.full, fd) <= 1e-6
    assert rel_error(rep.parts.sum(axis=1), fd) <= 1e-6


def test_report_parts_naive():
    rng = Rng(7)
    H, W = rng.normal((8, 3)), rng.normal((4, 3))
    y = rng.gen.integers(0, 4, size=8)
    rep = L.classifier_gradient(L.ARB, H, y, W, [9, 3, 1, 20])
    _, G = L.sample_losses(L.ARB, H @ W.T, y, [9, 3, 1, 20])
    np.testing.assert_allclose(rep.parts, naive_parts(G, H, y, 4), atol=1e-12, rtol=0)
    assert rep.reconstruction_residual() <= 1e-10


def test_report_accessors():
    rng = Rng(8)
    H, W = rng.normal((5, 2)), rng.normal((3, 2))
    y = [0, 1, 2, 0, 1]
    rep = L.classifier_gradient(L.CE, H, y, W)
    np.testing.assert_array_equal(rep.attraction[1], rep.parts[1, 1])
    np.testing.assert_array_equal(rep.repulsion(0, 2), rep.parts[0, 2])
    with pytest.raises(ValueError):
        rep.repulsion(1, 1)
    np.testing.assert_allclose(rep.repulsion_total()[0], rep.parts[0, 1] + rep.parts[0, 2], atol=1e-15)
    np.testing.assert_allclose(rep.part_norms()[2, 0], np.linalg.norm(rep.parts[2, 0]))
    np.testing.assert_allclose(rep.normalized_parts()[0], rep.parts[0] / 2)


def test_report_counts_ce_default_bincount():
    rep = L.classifier_gradient(L.CE, np.ones((3, 2)), [0, 0, 1], np.eye(2))
    assert rep.counts.tolist() == [2, 1]


# feature gradient

def test_feature_gradient_zero():
    g = L.feature_gradient(L.CE, [900.0, 0.0, 0.0], 0, None, Rng(0).normal((3, 4)))
    np.testing.assert_array_equal(g, np.zeros(4))


def test_feature_gradient_parseval():
    rng = Rng(10)
    for _ in range(10):
        W = np.linalg.qr(rng.normal((6, 4)))[0].T  # orthonormal rows
        z = rng.normal(4)
        g = L.logit_gradient(L.CE, z, 1)
        assert np.linalg.norm(L.feature_gradient(L.CE, z, 1, None, W)) <= np.linalg.norm(g) + 1e-15


@pytest.mark.parametrize("kind", L.KINDS)
def test_feature_gradient_fd(kind):
    rng = Rng(11)
    W, h = rng.normal((4, 5)), rng.normal(5)
    n = np.array([30.0, 3.0, 8.0, 1.0])
    counts = n if kind == L.ARB else None
    got = L.feature_gradient(kind, W @ h, 2, counts, W)
    fd = fd_gradient(lambda v: naive_loss(W @ v, 2, counts), h)
    assert rel_error(got, fd) <= 1e-6


# q coefficients and weighted means

def test_q_coefficients():
    _, G = L.sample_losses(L.CE, np.array([[1.0, 0.0], [0.0, 2.0]]), [0, 0])
    q = L.q_coefficients(G, 0)
    p = L.softmax(np.array([[1.0, 0.0], [0.0, 2.0]]))[:, 0]
    np.testing.assert_allclose(q, 1 - p, rtol=1e-15)


def test_weighted_class_mean_hand():
    mean, empty = L.weighted_class_mean([[1.0, 0.0], [0.0, 1.0]], [0, 0], [1.0, 1.0], 0)
    np.testing.assert_array_equal(mean, [0.5, 0.5])
    assert not empty


def test_weighted_class_mean_empty():
    mean, empty = L.weighted_class_mean([[1.0, 0.0]], [0], [1.0], 1)
    np.testing.assert_array_equal(mean, [0.0, 0.0])
    assert empty


def test_weighted_class_mean_direct_sum():
    rng = Rng(12)
    H = rng.normal((9, 3))
    y = rng.gen.integers(0, 2, size=9)
    y[0] = 1
    q = rng.uniform(9)
    mean, _ = L.weighted_class_mean(H, y, q, 1)
    ref = [sum(q[j] * H[j, t] for j in range(9) if y[j] == 1) / sum(1 for v in y if v == 1) for t in range(3)]
    np.testing.assert_allclose(mean, ref, atol=1e-12, rtol=0)
