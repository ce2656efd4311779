import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsf.classifier import (
    ClassifierTrainConfig,
    LinearClassifier,
    SamplerState,
    build_sampler,
    cross_entropy,
    paired_cross_entropy,
    predict,
    softmax,
    train_debiased_head,
    train_erm_head,
)
from nsf.datasets import EmbeddingDataset
from nsf.errors import ConfigError, DegenerateDataError
from nsf.evaluate import evaluate
from nsf.grouping import CentroidSet, GroupAssignment, assign_groups, compute_centroids
from nsf.neutralize import estimate_invariant
from nsf.synthgen import SyntheticConfig, derive_seed, generate
from nsf.transform import AffineTransform, train_transform


def test_ce_gradient_finite_differences():
    r = np.random.default_rng(0)
    x = r.normal(size=(16, 5))
    y = r.integers(0, 3, 16)
    w, b = r.normal(size=(3, 5)), r.normal(size=3)
    _, gw, gb = cross_entropy(w, b, x, y)
    h = 1e-5
    for arr, grad in ((w, gw), (b, gb)):
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = cross_entropy(w, b, x, y)[0]
            arr[idx] = orig - h
            dn = cross_entropy(w, b, x, y)[0]
            arr[idx] = orig
            num[idx] = (up - dn) / (2 * h)
        err = np.abs(num - grad) / np.maximum(1e-8, np.abs(num) + np.abs(grad))
        assert err.max() <= 1e-4


def test_softmax_normalised_and_stable():
    p = softmax(np.array([[1000.0, 0.0, -1000.0], [1.0, 2.0, 3.0]]))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(p))


def test_uniform_scores_cost_log_k():
    x = np.zeros((4, 3))
    loss, _, _ = cross_entropy(np.zeros((2, 3)), np.zeros(2), x, np.array([0, 1, 0, 1]))
    assert loss == pytest.approx(math.log(2))


def test_single_sample_pools():
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([0, 1])
    w, b = np.array([[0.5, -0.2], [0.1, 0.3]]), np.array([0.0, 0.1])
    loss, gw, _ = paired_cross_entropy(w, b, x, y, np.array([0]), np.array([1]))
    l0, g0, _ = cross_entropy(w, b, x[:1], y[:1])
    l1, g1, _ = cross_entropy(w, b, x[1:], y[1:])
    assert loss == pytest.approx(l0 + l1)
    assert np.allclose(gw, g0 + g1)
    empty = paired_cross_entropy(w, b, x, y, np.array([], int), np.array([1]))
    assert empty[0] == pytest.approx(l1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_prediction_invariant_to_positive_scaling(seed, c):
    r = np.random.default_rng(seed)
    clf = LinearClassifier(r.normal(size=(3, 4)), r.normal(size=3))
    x = r.normal(size=(20, 4))
    scaled = LinearClassifier(clf.weights * c, clf.bias * c)
    assert np.array_equal(clf.predict(x), scaled.predict(x))


def test_separable_toy_reaches_full_accuracy():
    x = np.array([[-2.0, 0.0], [-1.0, 0.5], [1.0, -0.5], [2.0, 0.0]] * 10)
    y = np.array([0, 0, 1, 1] * 10)
    ds = EmbeddingDataset(x, y)
    clf = train_erm_head(ds, ClassifierTrainConfig(learning_rate=0.05, steps=300, batch_size=0))
    assert np.mean(clf.predict(x) == y) == 1.0


def test_random_labels_do_not_generalise():
    r = np.random.default_rng(7)
    x = r.normal(size=(400, 5))
    y = r.integers(0, 2, 400)
    x_te = r.normal(size=(4000, 5))
    y_te = r.integers(0, 2, 4000)
    clf = train_erm_head(EmbeddingDataset(x, y), ClassifierTrainConfig(learning_rate=0.01, steps=500))
    loss, _, _ = cross_entropy(clf.weights, clf.bias, x_te, y_te)
    assert loss >= math.log(2) - 0.02


def test_training_deterministic(small_synth):
    cfg = ClassifierTrainConfig(steps=50, seed=3)
    a = train_erm_head(small_synth, cfg)
    b = train_erm_head(small_synth, cfg)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)


def test_config_validation():
    with pytest.raises(ConfigError) as exc:
        ClassifierTrainConfig(batch_size=-1)
    assert exc.value.field == "batch_size"


def test_balanced_draws():
    s = SamplerState(np.arange(0, 10), np.arange(10, 1000), batch_size=64, seed=0)
    r = np.random.default_rng(0)
    counts = np.zeros(1000)
    steps = 500
    for _ in range(steps):
        m1, m2 = s.draw(r)
        assert len(m1) == len(m2) == 64
        np.add.at(counts, np.concatenate([m1, m2]), 1)
    # Each M1 member is drawn Binomial(steps * 64, 1/10) times.
    mean, sd = steps * 6.4, math.sqrt(steps * 64 * 0.1 * 0.9)
    assert np.all(np.abs(counts[:10] - mean) <= 3.5 * sd)
    assert counts[:10].sum() == counts[10:].sum()


def _assignment(rel, labels, mask):
    rel = np.asarray(rel, float)
    labels = np.asarray(labels)
    in_u = rel > 0
    u = np.bincount(labels[in_u], minlength=2)
    v = np.bincount(labels[~in_u], minlength=2)
    return GroupAssignment(rel, labels.copy(), in_u, np.asarray(mask, bool), u, v)


def test_sampler_definitions():
    # Class 0 targets (0,0); class 1 targets (10,0). Raw features are irrelevant
    # except through the transform, which is the identity here.
    x = np.array([[1.0, 0.0], [9.0, 0.0], [2.0, 0.0], [4.0, 0.0], [8.0, 0.0]])
    y = [0, 0, 0, 1, 1]
    ds = EmbeddingDataset(x, y)
    cents = CentroidSet(np.array([[5.0, 0.0], [6.0, 0.0]]), np.array([[0.0, 0.0], [10.0, 0.0]]), [True, True])
    a = _assignment([3.0, 2.0, -1.0, 0.0, 5.0], y, [1, 1, 1, 1, 0])
    s = build_sampler(ds, AffineTransform.identity(2), cents, a)
    # Sample 0 deviates and lands on its own side after the transform; sample 1 does not;
    # sample 4 deviates but its class is masked.
    assert s.m1_indices.tolist() == [0]
    assert s.m2_indices.tolist() == [2]
    assert not s.fell_back


def test_sampler_fallback_and_empty():
    x = np.array([[9.0, 0.0], [0.0, 0.0], [10.0, 0.0]])
    y = [0, 0, 1]
    ds = EmbeddingDataset(x, y)
    cents = CentroidSet(np.array([[5.0, 0.0], [6.0, 0.0]]), np.array([[0.0, 0.0], [10.0, 0.0]]), [True, True])
    s = build_sampler(ds, AffineTransform.identity(2), cents, _assignment([1.0, -1.0, -1.0], y, [1, 1, 1]))
    assert s.fell_back and s.m1_indices.tolist() == [0]
    with pytest.raises(DegenerateDataError):
        build_sampler(ds, AffineTransform.identity(2), cents, _assignment([0.0, 0.0, 0.0], y, [0, 0, 0]))
    with pytest.raises(ValueError):
        build_sampler(ds, AffineTransform.identity(2), cents, _assignment([1.0, -1.0, -1.0], y, [1, 1, 1]),
                      reference="other")


def test_predict_with_and_without_transform(small_synth):
    clf = LinearClassifier(np.eye(2, small_synth.dim), np.zeros(2))
    ident = AffineTransform.identity(small_synth.dim)
    assert np.array_equal(predict(clf, small_synth.features), predict(clf, small_synth.features, ident))
    dead = AffineTransform(np.zeros(small_synth.dim), np.ones(small_synth.dim))
    assert len(np.unique(predict(clf, small_synth.features, dead))) == 1


@pytest.fixture(scope="module")
def fitted():
    train = generate(SyntheticConfig(seed=2))
    test = generate(SyntheticConfig(seed=derive_seed(2, 1)))
    c = compute_centroids(train)
    a = assign_groups(train, c)
    inv = estimate_invariant(train, a, c)
    t = train_transform(train, a, inv).transform
    return train, test, t, inv, a


def test_pools_on_synthetic(fitted):
    train, _, t, inv, a = fitted
    s = build_sampler(train, t, inv, a)
    assert abs(s.m1_indices.size / train.n - 0.1) <= 0.03
    assert not np.intersect1d(s.m1_indices, s.m2_indices).size
    alt = build_sampler(train, t, inv, a, reference="transformed")
    assert alt.m1_indices.size > 0


def test_erm_biased_and_debiased_head_fixes_it(fitted):
    train, test, t, inv, a = fitted
    cfg = ClassifierTrainConfig(seed=2)
    erm = evaluate(train_erm_head(train, cfg), test)
    assert erm.mean_accuracy - erm.worst_group_accuracy >= 0.15
    deb = evaluate(train_debiased_head(train, t, build_sampler(train, t, inv, a, seed=5), cfg), test, t)
    assert deb.worst_group_accuracy - erm.worst_group_accuracy >= 0.10
