import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from arblab import loss as L
from arblab.analysis import smooth
from arblab.collapse import balance_metrics, etf_frame
from arblab.config import ExperimentConfig, dump_ini, parse_text
from arblab.data import iterate_batches, longtail_counts, synth_gaussian_mixture
from arblab.numkit import Rng

finite = st.floats(-30, 30, allow_nan=False)


@st.composite
def instances(draw):
    b = draw(st.integers(1, 8))
    c = draw(st.integers(2, 6))
    d = draw(st.integers(1, 5))
    Z = draw(arrays(np.float64, (b, c), elements=finite))
    H = draw(arrays(np.float64, (b, d), elements=st.floats(-5, 5)))
    labels = np.array(draw(st.lists(st.integers(0, c - 1), min_size=b, max_size=b)))
    counts = np.array(draw(st.lists(st.integers(1, 10**6), min_size=c, max_size=c)), dtype=float)
    return Z, H, labels, counts


@given(instances())
def test_logit_gradients_sum_to_zero(inst):
    Z, _, y, n = inst
    for counts, kind in ((None, L.CE), (n, L.ARB)):
        _, G = L.sample_losses(kind, Z, y, counts)
        assert np.all(np.abs(G.sum(axis=1)) <= 1e-12)


@given(instances())
def test_gradient_sign_pattern(inst):
    Z, _, y, n = inst
    _, G = L.sample_losses(L.ARB, Z, y, n)
    rows = np.arange(len(y))
    assert np.all(G[rows, y] <= 0)
    mask = np.ones_like(G, dtype=bool)
    mask[rows, y] = False
    assert np.all(G[mask] >= 0)


@given(instances())
def test_ce_loss_non_negative(inst):
    Z, _, y, _ = inst
    losses, _ = L.sample_losses(L.CE, Z, y)
    assert np.all(losses >= -1e-15)


@given(instances())
def test_arb_weighted_probabilities_sum_to_one(inst):
    Z, _, y, n = inst
    p = L.arb_softmax(Z[0], n, y[0])
    assert abs((n / n[y[0]] * p).sum() - 1) <= 1e-12


@given(instances())
def test_uniform_counts_degenerate_to_ce(inst):
    Z, H, y, _ = inst
    c = Z.shape[1]
    la, ga = L.sample_losses(L.ARB, Z, y, np.full(c, 3.0))
    lc, gc = L.sample_losses(L.CE, Z, y)
    assert np.all(np.abs(la - lc) <= 1e-14) and np.all(np.abs(ga - gc) <= 1e-14)


@given(instances())
def test_report_reconstructs_full_gradient(inst):
    Z, H, y, n = inst
    c = Z.shape[1]
    for kind, counts in ((L.CE, None), (L.ARB, n)):
        _, G = L.sample_losses(kind, Z, y, counts)
        rep = L.report_from_logit_grads(kind, G, H, y, c, counts)
        assert rep.reconstruction_residual() <= 1e-10


@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(1, 5)), elements=st.floats(-10, 10)))
def test_balance_metrics_non_negative(W):
    if np.any(np.linalg.norm(W, axis=1) < 1e-6):
        return
    m = balance_metrics(W)
    assert m.B_D2 >= 0 and m.B_A2 >= 0 and m.B_L2 >= 0
    assert np.all(np.diag(m.M) == 0)
    assert 0 <= m.min_pairwise_angle_deg <= 180


@settings(max_examples=40)
@given(st.integers(2, 12), st.integers(0, 40), st.integers(0, 10**6))
def test_etf_invariants(c, extra, seed):
    W = etf_frame(c, c + extra, Rng(seed)).W_star
    D = W @ W.T
    assert np.all(np.abs(np.diag(D) - 1) <= 1e-10)
    assert np.all(np.abs(D[~np.eye(c, dtype=bool)] + 1 / (c - 1)) <= 1e-10)


@given(st.integers(2, 30), st.integers(1, 5000), st.floats(1, 500))
def test_longtail_monotone(c, base, imf):
    n = longtail_counts(c, base, imf)
    assert n[0] == base
    assert np.all(np.diff(n) <= 0)
    assert n.min() >= 1


@given(st.lists(st.integers(1, 6), min_size=2, max_size=5), st.integers(1, 9), st.integers(0, 1000))
def test_batches_partition_dataset(counts, bs, seed):
    ds = synth_gaussian_mixture(Rng(seed), len(counts), 3, counts, 1.0)
    batches = list(iterate_batches(ds, bs, True, Rng(seed + 1)))
    total = sum(b.batch_counts for b in batches)
    assert total.tolist() == ds.class_counts.tolist()
    assert all(1 <= b.labels.size <= bs for b in batches)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.sampled_from([1, 3, 5, 11]))
def test_smooth_bounded(xs, w):
    s = smooth(xs, w)
    assert s.shape == (len(xs),)
    assert np.all(s >= min(xs) - 1e-9) and np.all(s <= max(xs) + 1e-9)


@given(st.integers(0, 1000), st.floats(1e-4, 1.0), st.integers(1, 300), st.sampled_from(["ce", "arb"]),
       st.lists(st.integers(1, 64), max_size=3), st.booleans())
def test_config_round_trip(seed, lr, epochs, kind, hidden, mixup):
    cfg = ExperimentConfig().with_values(experiment={"seed": seed}, optim={"lr": lr, "epochs": epochs},
                                         loss={"kind": kind}, model={"hidden": hidden}, data={"mixup": mixup})
    assert parse_text(dump_ini(cfg)) == cfg
