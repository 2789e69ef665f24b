"""The two-step detector: identify a contaminated window, then localize.

Identification thresholds the network score strictly at the learned cut-off.
Localization is the argmax of the absolute reconstruction error, which works
because a shock perturbs one observation while the PCA reconstruction stays
anchored to the window's ordinary shape. Iterating identify -> localize ->
impute removes several anomalies from one window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import pcafeat, scorer

IMPUTATION_METHODS = ("BF", "LI", "PCA_RECON")


@dataclass
class DetectionModel:
    pca: pcafeat.PcaModel
    net: scorer.ScoringNetwork

    def __post_init__(self):
        if self.net.layer_dims[0] != self.pca.window_length:
            raise ValueError("network input dim does not match the PCA window length")


@dataclass
class DetectionReport:
    pred_label: int
    score: float
    locations: list           # 1-based window-relative indices, discovery order
    imputed_series: np.ndarray
    iterations_used: int
    repeated_location: bool = False


def identify(model: DetectionModel, X):
    """A_hat_i = 1 iff score(epsilon_i) > s, strict."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    epsilon = pcafeat.reconstruction_errors(model.pca, X).epsilon
    scores = scorer.forward(model.net, epsilon)
    return (np.atleast_1d(scores) > model.net.cutoff).astype(np.int64)


def scores(model: DetectionModel, X):
    """Network scores of raw windows (reconstruction errors computed inside)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    epsilon = pcafeat.reconstruction_errors(model.pca, X).epsilon
    return scorer.forward(model.net, epsilon)


def localize(pca: pcafeat.PcaModel, X_row):
    """1-based index of the largest |epsilon|; ties go to the smallest index."""
    row = np.asarray(X_row, dtype=float).ravel()
    epsilon = pcafeat.reconstruction_errors(pca, row).epsilon
    return int(np.argmax(np.abs(epsilon))) + 1


def impute(X_row, location, method, pca: pcafeat.PcaModel = None):
    """Replace the flagged value; everything else is untouched.

    BF fills with the previous value (index 1 falls forward); LI uses the
    neighbor midpoint (nearest neighbor at the boundary); PCA_RECON writes the
    model reconstruction at the location and needs the fitted model.
    """
    row = np.asarray(X_row, dtype=float).ravel().copy()
    p = row.size
    location = int(location)
    if not 1 <= location <= p:
        raise ValueError(f"location must lie in 1..{p}, got {location}")
    j = location - 1
    if method == "BF":
        row[j] = row[j + 1] if j == 0 else row[j - 1]
    elif method == "LI":
        if j == 0:
            row[j] = row[1]
        elif j == p - 1:
            row[j] = row[p - 2]
        else:
            row[j] = 0.5 * (row[j - 1] + row[j + 1])
    elif method == "PCA_RECON":
        if pca is None:
            raise ValueError("PCA_RECON imputation needs the fitted PcaModel")
        centered = row - pca.mean
        reconstructed = (centered @ pca.omega.T) @ pca.omega + pca.mean
        row[j] = reconstructed[j]
    else:
        raise ValueError(f"unknown imputation method {method!r}; pick one of {IMPUTATION_METHODS}")
    return row


def detect_iterative(model: DetectionModel, X_row, method="BF", max_iter=5) -> DetectionReport:
    """identify -> localize -> impute until the window stops identifying.

    The reported label and score are the first identification's; locations
    accumulate in discovery order. Re-flagging an already imputed index would
    loop, so it forces termination with the repeated_location flag set.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    row = np.asarray(X_row, dtype=float).ravel().copy()
    first_score = float(scores(model, row)[0])
    flagged = bool(first_score > model.net.cutoff)
    locations = []
    repeated = False
    iterations = 0
    contaminated = flagged
    while contaminated and iterations < max_iter:
        iterations += 1
        location = localize(model.pca, row)
        if location in locations:
            repeated = True
            break
        locations.append(location)
        row = impute(row, location, method, pca=model.pca)
        contaminated = bool(scores(model, row)[0] > model.net.cutoff)
    return DetectionReport(
        pred_label=int(flagged),
        score=first_score,
        locations=locations,
        imputed_series=row,
        iterations_used=iterations,
        repeated_location=repeated,
    )
