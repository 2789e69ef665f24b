"""Two-step detection: identify, localize, impute, iterate."""

import numpy as np
import pytest

from panelscan import detector, pcafeat, scorer


def _planted_model(p=10, seed=0):
    """PCA on smooth rank-2 windows plus a hand-built scoring net.

    The net computes max-like evidence through ReLU pairs: score =
    sum_j relu(eps_j) + relu(-eps_j) = ||eps||_1, so clean windows score near
    zero and spiked ones score high, with an interpretable cutoff.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, p)
    base = np.vstack([np.ones(p), t])
    latent = rng.standard_normal((400, 2)) * np.array([5.0, 2.0])
    X = latent @ base + 1e-4 * rng.standard_normal((400, p))
    pca = pcafeat.fit_pca(X, k=2)
    W0 = np.vstack([np.eye(p), -np.eye(p)])
    net = scorer.ScoringNetwork(
        layer_dims=[p, 2 * p, 1],
        weights=[W0, np.ones((1, 2 * p))],
        biases=[np.zeros(2 * p), np.zeros(1)],
        cutoff=0.05,
        temperature=0.1,
    )
    return detector.DetectionModel(pca=pca, net=net), X


def test_model_dimension_guard():
    model, _ = _planted_model()
    bad_net = scorer.ScoringNetwork(layer_dims=[7, 1], weights=[np.ones((1, 7))],
                                    biases=[np.zeros(1)], cutoff=0.0, temperature=1.0)
    with pytest.raises(ValueError):
        detector.DetectionModel(pca=model.pca, net=bad_net)


def test_identify_is_strictly_above_cutoff():
    model, X = _planted_model()
    clean = X[0]
    spiked = clean.copy()
    spiked[4] += 3.0
    labels = detector.identify(model, np.vstack([clean, spiked]))
    np.testing.assert_array_equal(labels, [0, 1])
    # a window scoring exactly at the cutoff is NOT flagged
    eps = pcafeat.reconstruction_errors(model.pca, clean).epsilon
    exact = scorer.forward(model.net, eps)
    model.net.cutoff = float(exact)
    assert detector.identify(model, clean)[0] == 0


def test_localize_finds_the_spike():
    model, X = _planted_model(seed=1)
    for j in (0, 3, 9):
        spiked = X[1].copy()
        spiked[j] += 2.5
        assert detector.localize(model.pca, spiked) == j + 1


def test_localize_tie_breaks_to_first_index():
    pca = pcafeat.PcaModel(mean=np.zeros(4), omega=np.zeros((1, 4)),
                           eigenvalues=np.ones(1), k=1)
    pca.omega[0, 0] = 1.0
    # epsilon = -(x - mean) outside the first axis: equal spikes at 2 and 4
    row = np.array([7.0, 2.0, 0.0, -2.0])
    assert detector.localize(pca, row) == 2


def test_impute_backward_fill():
    row = np.array([100.0, 104.0, 101.0, 103.0])
    np.testing.assert_array_equal(detector.impute(row, 2, "BF"), [100.0, 100.0, 101.0, 103.0])
    # first index falls forward
    np.testing.assert_array_equal(detector.impute(row, 1, "BF"), [104.0, 104.0, 101.0, 103.0])
    np.testing.assert_array_equal(row, [100.0, 104.0, 101.0, 103.0])


def test_impute_linear_interpolation():
    row = np.array([100.0, 104.0, 101.0, 103.0])
    np.testing.assert_array_equal(detector.impute(row, 2, "LI"), [100.0, 100.5, 101.0, 103.0])
    np.testing.assert_array_equal(detector.impute(row, 1, "LI"), [104.0, 104.0, 101.0, 103.0])
    np.testing.assert_array_equal(detector.impute(row, 4, "LI"), [100.0, 104.0, 101.0, 101.0])


def test_impute_pca_reconstruction():
    model, X = _planted_model(seed=2)
    spiked = X[2].copy()
    spiked[5] += 2.0
    fixed = detector.impute(spiked, 6, "PCA_RECON", pca=model.pca)
    # the projection leaks a little spike energy; most of the 2.0 is gone
    assert abs(fixed[5] - X[2][5]) < 0.3
    np.testing.assert_array_equal(fixed[:5], spiked[:5])
    np.testing.assert_array_equal(fixed[6:], spiked[6:])
    with pytest.raises(ValueError):
        detector.impute(spiked, 6, "PCA_RECON")


def test_impute_validation():
    row = np.array([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        detector.impute(row, 0, "BF")
    with pytest.raises(ValueError):
        detector.impute(row, 4, "BF")
    with pytest.raises(ValueError, match="unknown imputation method"):
        detector.impute(row, 1, "ffill")


def test_detect_iterative_removes_planted_anomalies():
    model, X = _planted_model(seed=3)
    window = X[5].copy()
    window[2] += 4.0
    window[7] -= 3.0
    report = detector.detect_iterative(model, window, method="LI")
    assert report.pred_label == 1
    assert report.score > model.net.cutoff
    assert set(report.locations) == {3, 8}
    assert report.iterations_used == len(report.locations)
    assert not report.repeated_location
    # the imputed series no longer identifies
    assert detector.identify(model, report.imputed_series)[0] == 0


def test_detect_iterative_clean_window_short_circuits():
    model, X = _planted_model(seed=4)
    report = detector.detect_iterative(model, X[7])
    assert report.pred_label == 0
    assert report.locations == []
    assert report.iterations_used == 0
    np.testing.assert_array_equal(report.imputed_series, X[7])


def test_detect_iterative_respects_max_iter():
    model, X = _planted_model(seed=5)
    window = X[9].copy()
    window[[1, 4, 8]] += np.array([3.0, 4.0, 5.0])
    report = detector.detect_iterative(model, window, method="BF", max_iter=2)
    assert report.iterations_used == 2
    assert len(report.locations) == 2
    with pytest.raises(ValueError):
        detector.detect_iterative(model, window, max_iter=0)


def test_detect_iterative_flags_repeated_location():
    # a net that always identifies forces the repeat guard to fire
    p = 6
    rng = np.random.default_rng(6)
    X = np.vstack([np.ones(p) + 0.01 * rng.standard_normal(p) for _ in range(50)])
    pca = pcafeat.fit_pca(X, k=1)
    always_on = scorer.ScoringNetwork(
        layer_dims=[p, 1], weights=[np.zeros((1, p))], biases=[np.ones(1)],
        cutoff=0.0, temperature=1.0)
    model = detector.DetectionModel(pca=pca, net=always_on)
    report = detector.detect_iterative(model, X[0], method="PCA_RECON", max_iter=50)
    assert report.repeated_location
    assert report.iterations_used < 50
    assert len(set(report.locations)) == len(report.locations)


def test_scores_match_forward_on_features():
    model, X = _planted_model(seed=7)
    eps = pcafeat.reconstruction_errors(model.pca, X[:4]).epsilon
    np.testing.assert_allclose(detector.scores(model, X[:4]),
                               scorer.forward(model.net, eps), rtol=1e-14)
