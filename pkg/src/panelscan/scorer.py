"""Anomaly scorers: naive reconstruction-error norms and the trained network.

The network maps a reconstruction-error row to a scalar score through ReLU
hidden layers and an affine output, and carries its own decision cut-off s.
Training minimizes

    loss = BCE(A, p_hat) + AUC_u(s) + AUC_c(s)

where p_hat = logistic((score - s) / tau) is a smooth stand-in for the hard
indicator 1{score > s}, AUC_u is the mass of the uncontaminated score density
above s and AUC_c the mass of the contaminated density below s, both taken
from Gaussian KDEs refit on the current scores at every iteration. With a
Gaussian kernel the AUC terms are means of kernel CDFs, so their gradients
with respect to every score and to s are exact:

    d AUC_u / d s = -f_u(s),   d AUC_c / d s = +f_c(s),

and per-score derivatives are kernel CDF derivatives. Everything else is
plain backpropagation; the optimizer is full-batch Adam and the returned
parameters are the best-loss snapshot seen during the run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from . import density

PROB_CLIP = 1e-7

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass
class ScoringNetwork:
    layer_dims: list
    weights: list    # W^l of shape (dims[l+1], dims[l])
    biases: list     # b^l of shape (dims[l+1],)
    cutoff: float
    temperature: float


@dataclass
class TrainConfig:
    hidden_dims: tuple = (64, 32)
    learning_rate: float = 1e-3
    max_iters: int = 2000
    batch_size: int | None = 16  # rows per Adam update; None trains full-batch
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    temperature: float = 0.2   # label smoothing scale; initial scores have unit spread
    anneal_factor: float = 1.0  # < 1 shrinks tau every max_iters // 4 iterations
    bandwidth_rule: object = "silverman"


@dataclass
class LossTerms:
    total: float
    bce: float
    auc_u: float
    auc_c: float


@dataclass
class LossGradient:
    weights: list
    biases: list
    cutoff: float


@dataclass
class TrainLogRow:
    iteration: int
    loss: float
    bce: float
    auc_u: float
    auc_c: float
    cutoff: float


@dataclass
class TrainResult:
    network: ScoringNetwork
    history: list
    best_iteration: int

    @property
    def best_loss(self):
        return self.history[self.best_iteration].loss


def _forward_cached(net, batch):
    """Forward pass keeping pre-activations and activations for backprop."""
    activations = [batch]
    pre_activations = []
    a = batch
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ W.T + b
        pre_activations.append(z)
        a = np.maximum(z, 0.0)
        activations.append(a)
    scores = a @ net.weights[-1].T + net.biases[-1]
    return scores[:, 0], pre_activations, activations


def forward(net: ScoringNetwork, epsilon):
    """Score reconstruction-error rows; scalar for a single row."""
    x = np.asarray(epsilon, dtype=float)
    squeeze = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.shape[1] != net.layer_dims[0]:
        raise ValueError(f"expected rows of length {net.layer_dims[0]}, got {batch.shape[1]}")
    scores, _, _ = _forward_cached(net, batch)
    return float(scores[0]) if squeeze else scores


def smooth_labels(net: ScoringNetwork, scores):
    """p_hat = logistic((score - s) / tau); hard indicator in the tau -> 0 limit."""
    if net.temperature <= 0:
        raise ValueError("temperature must be positive")
    return expit((np.asarray(scores, dtype=float) - net.cutoff) / net.temperature)


def _class_split(scores, A):
    uncontaminated = scores[A == 0]
    contaminated = scores[A == 1]
    if uncontaminated.size == 0 or contaminated.size == 0:
        raise ValueError("both classes required")
    return uncontaminated, contaminated


def _bandwidths(scores_u, scores_c, rule):
    if isinstance(rule, str):
        return density.silverman_bandwidth(scores_u), density.silverman_bandwidth(scores_c)
    return float(rule), float(rule)


def _terms_from_scores(scores, A, s, tau, h_u, h_c):
    scores_u, scores_c = _class_split(scores, A)
    raw = expit((scores - s) / tau)
    p_hat = np.clip(raw, PROB_CLIP, 1.0 - PROB_CLIP)
    bce = -float(np.mean(A * np.log(p_hat) + (1.0 - A) * np.log(1.0 - p_hat)))
    auc_u = float(np.mean(ndtr((scores_u - s) / h_u)))
    auc_c = float(np.mean(ndtr((s - scores_c) / h_c)))
    return LossTerms(total=bce + auc_u + auc_c, bce=bce, auc_u=auc_u, auc_c=auc_c)


def _bce_score_gradients(scores, A, s, tau):
    """BCE part of d loss / d score_i and d loss / d s (clipped rows are flat)."""
    n = scores.size
    raw = expit((scores - s) / tau)
    unclipped = (raw > PROB_CLIP) & (raw < 1.0 - PROB_CLIP)
    bce_z = np.where(unclipped, (raw - A) / n, 0.0)
    return bce_z / tau, -float(bce_z.sum()) / tau


def _score_gradients(scores, A, s, tau, h_u, h_c):
    """d loss / d score_i and d loss / d s, treating the bandwidths as fixed."""
    n = scores.size
    d_scores, d_cutoff = _bce_score_gradients(scores, A, s, tau)

    mask_u = A == 0
    mask_c = A == 1
    n_u = int(mask_u.sum())
    n_c = int(mask_c.sum())
    z_u = (scores[mask_u] - s) / h_u
    z_c = (s - scores[mask_c]) / h_c
    phi_u = np.exp(-0.5 * z_u * z_u) / _SQRT_2PI
    phi_c = np.exp(-0.5 * z_c * z_c) / _SQRT_2PI
    auc_scores = np.zeros(n)
    auc_scores[mask_u] = phi_u / (n_u * h_u)
    auc_scores[mask_c] = -phi_c / (n_c * h_c)
    d_scores = d_scores + auc_scores
    d_cutoff += -float(phi_u.mean()) / h_u  # -f_u(s)
    d_cutoff += float(phi_c.mean()) / h_c   # +f_c(s)
    return d_scores, d_cutoff


def _backprop(net, pre_activations, activations, d_scores):
    delta = d_scores[:, None]
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    for layer in range(len(net.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ activations[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer]) * (pre_activations[layer - 1] > 0.0)
    return grad_w, grad_b


def _loss_and_grad(net, batch, A, bandwidths=None, rule="silverman"):
    scores, pre_activations, activations = _forward_cached(net, batch)
    scores_u, scores_c = _class_split(scores, A)
    if bandwidths is None:
        h_u, h_c = _bandwidths(scores_u, scores_c, rule)
    else:
        h_u, h_c = bandwidths
    terms = _terms_from_scores(scores, A, net.cutoff, net.temperature, h_u, h_c)
    d_scores, d_cutoff = _score_gradients(scores, A, net.cutoff, net.temperature, h_u, h_c)
    grad_w, grad_b = _backprop(net, pre_activations, activations, d_scores)
    return terms, LossGradient(weights=grad_w, biases=grad_b, cutoff=d_cutoff)


def _as_batch(net, epsilon, A):
    batch = np.atleast_2d(np.asarray(epsilon, dtype=float))
    if batch.shape[1] != net.layer_dims[0]:
        raise ValueError(f"expected rows of length {net.layer_dims[0]}, got {batch.shape[1]}")
    labels = np.asarray(A, dtype=float).ravel()
    if labels.size != batch.shape[0]:
        raise ValueError("labels and batch disagree on the number of rows")
    return batch, labels


def loss_terms(net: ScoringNetwork, epsilon_batch, A, bandwidths=None) -> LossTerms:
    """Loss decomposition at the current parameters.

    bandwidths pins (h_u, h_c) explicitly; by default they are refit on the
    current scores with Silverman's rule, exactly as one training iteration
    sees them.
    """
    batch, labels = _as_batch(net, epsilon_batch, A)
    scores = forward(net, batch)
    scores_u, scores_c = _class_split(scores, labels)
    if bandwidths is None:
        h_u, h_c = _bandwidths(scores_u, scores_c, "silverman")
    else:
        h_u, h_c = bandwidths
    return _terms_from_scores(scores, labels, net.cutoff, net.temperature, h_u, h_c)


def loss(net: ScoringNetwork, epsilon_batch, A, bandwidths=None) -> float:
    return loss_terms(net, epsilon_batch, A, bandwidths=bandwidths).total


def loss_gradient(net: ScoringNetwork, epsilon_batch, A, bandwidths=None) -> LossGradient:
    """Exact gradients of the loss over weights, biases and the cut-off."""
    batch, labels = _as_batch(net, epsilon_batch, A)
    _, grads = _loss_and_grad(net, batch, labels, bandwidths=bandwidths)
    return grads


def _init_network(p, hidden_dims, rng):
    dims = [int(p), *(int(d) for d in hidden_dims), 1]
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ScoringNetwork(layer_dims=dims, weights=weights, biases=biases,
                          cutoff=0.0, temperature=1.0)


def _snapshot(net):
    return ScoringNetwork(
        layer_dims=list(net.layer_dims),
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
        cutoff=net.cutoff,
        temperature=net.temperature,
    )


def train(epsilon_train, A_train, cfg: TrainConfig = None) -> TrainResult:
    """Minibatch Adam on the custom loss; returns the best-loss snapshot.

    Each of the max_iters iterations takes one Adam step on a minibatch of
    batch_size rows (shuffled anew each pass over the data; batch_size None or
    >= n trains full-batch). The loss is observed on the full training set at
    every iteration and the returned parameters are the snapshot with the
    lowest observed loss, so the log and the snapshot rule are independent of
    the batching. Gradients on a batch use KDE bandwidths refit from that
    batch's scores; a single-class batch falls back to its BCE term alone.

    Initialization: uniform +-1/sqrt(fan_in) weights; the output layer is then
    rescaled so the initial scores have unit spread (keeps the learned cut-off
    and its robustness bands on a feature-scale-free footing); s starts at the
    median initial score. The default tau of 0.2 on that unit scale keeps the
    BCE pull bounded once |score - s| clears a few units, so trained scores
    stay compact around the cut-off instead of stretching to the probability
    clip. An anneal_factor below one shrinks tau every max_iters // 4
    iterations for callers who want a harder indicator late in training.
    """
    cfg = cfg or TrainConfig()
    if cfg.learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if cfg.max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    batch = np.atleast_2d(np.asarray(epsilon_train, dtype=float))
    labels = np.asarray(A_train, dtype=float).ravel()
    if labels.size != batch.shape[0]:
        raise ValueError("labels and batch disagree on the number of rows")
    if not (np.any(labels == 1) and np.any(labels == 0)):
        raise ValueError("both classes required")

    rng = np.random.default_rng(cfg.seed)
    net = _init_network(batch.shape[1], cfg.hidden_dims, rng)
    scores = forward(net, batch)
    spread = float(np.std(scores))
    if spread > 0:
        net.weights[-1] = net.weights[-1] / spread
        net.biases[-1] = net.biases[-1] / spread
        scores = scores / spread
    net.cutoff = float(np.median(scores))
    if cfg.temperature <= 0:
        raise ValueError("temperature must be positive")
    net.temperature = float(cfg.temperature)

    m_w = [np.zeros_like(w) for w in net.weights]
    v_w = [np.zeros_like(w) for w in net.weights]
    m_b = [np.zeros_like(b) for b in net.biases]
    v_b = [np.zeros_like(b) for b in net.biases]
    m_s = 0.0
    v_s = 0.0

    history = []
    best = _snapshot(net)
    best_loss = np.inf
    best_iteration = 0
    anneal_period = cfg.max_iters // 4

    n_rows = batch.shape[0]
    step = n_rows if cfg.batch_size is None else int(cfg.batch_size)
    if step < 1:
        raise ValueError("batch_size must be positive")
    step = min(step, n_rows)
    full_batch = step == n_rows
    order = np.empty(0, dtype=np.intp)
    cursor = 0

    def _book(iteration, terms):
        nonlocal best, best_loss, best_iteration
        history.append(TrainLogRow(iteration, terms.total, terms.bce,
                                   terms.auc_u, terms.auc_c, net.cutoff))
        if not np.isfinite(terms.total):
            raise FloatingPointError(
                f"training diverged at iteration {iteration}: "
                f"loss={terms.total}, bce={terms.bce}, "
                f"auc_u={terms.auc_u}, auc_c={terms.auc_c}")
        if terms.total < best_loss:
            best_loss = terms.total
            best = _snapshot(net)
            best_iteration = iteration

    def _observe(iteration):
        """Full-train loss bookkeeping; doubles as the gradient pass when full-batch."""
        if full_batch:
            terms, grads = _loss_and_grad(net, batch, labels, rule=cfg.bandwidth_rule)
            _book(iteration, terms)
            return grads
        scores_all = forward(net, batch)
        h_u, h_c = _bandwidths(*_class_split(scores_all, labels), cfg.bandwidth_rule)
        _book(iteration, _terms_from_scores(scores_all, labels, net.cutoff,
                                            net.temperature, h_u, h_c))
        return None

    def _minibatch_gradients():
        nonlocal order, cursor
        if cursor >= order.size:
            order = rng.permutation(n_rows)
            cursor = 0
        idx = order[cursor:cursor + step]
        cursor += step
        rows, row_labels = batch[idx], labels[idx]
        if 0.0 < row_labels.mean() < 1.0:
            _, grads = _loss_and_grad(net, rows, row_labels, rule=cfg.bandwidth_rule)
            return grads
        # single-class batch: no class pair for the density terms
        scores_b, pre_acts, acts = _forward_cached(net, rows)
        d_scores, d_cutoff = _bce_score_gradients(scores_b, row_labels,
                                                  net.cutoff, net.temperature)
        grad_w, grad_b = _backprop(net, pre_acts, acts, d_scores)
        return LossGradient(weights=grad_w, biases=grad_b, cutoff=d_cutoff)

    lr = cfg.learning_rate
    for k in range(cfg.max_iters):
        if k > 0 and anneal_period > 0 and k % anneal_period == 0:
            net.temperature *= cfg.anneal_factor
        grads = _observe(k)
        if grads is None:
            grads = _minibatch_gradients()
        t = k + 1
        correct1 = 1.0 - cfg.beta1**t
        correct2 = 1.0 - cfg.beta2**t
        for layer in range(len(net.weights)):
            m_w[layer] = cfg.beta1 * m_w[layer] + (1.0 - cfg.beta1) * grads.weights[layer]
            v_w[layer] = cfg.beta2 * v_w[layer] + (1.0 - cfg.beta2) * grads.weights[layer] ** 2
            net.weights[layer] = net.weights[layer] - lr * (m_w[layer] / correct1) / (
                np.sqrt(v_w[layer] / correct2) + cfg.adam_eps)
            m_b[layer] = cfg.beta1 * m_b[layer] + (1.0 - cfg.beta1) * grads.biases[layer]
            v_b[layer] = cfg.beta2 * v_b[layer] + (1.0 - cfg.beta2) * grads.biases[layer] ** 2
            net.biases[layer] = net.biases[layer] - lr * (m_b[layer] / correct1) / (
                np.sqrt(v_b[layer] / correct2) + cfg.adam_eps)
        m_s = cfg.beta1 * m_s + (1.0 - cfg.beta1) * grads.cutoff
        v_s = cfg.beta2 * v_s + (1.0 - cfg.beta2) * grads.cutoff**2
        net.cutoff = net.cutoff - lr * (m_s / correct1) / (np.sqrt(v_s / correct2) + cfg.adam_eps)
    _observe(cfg.max_iters)  # evaluate the final iterate so the last step can win
    return TrainResult(network=best, history=history, best_iteration=best_iteration)


def naive_scores(epsilon):
    """L2 norm of each reconstruction-error row."""
    eps = np.asarray(epsilon, dtype=float)
    if eps.ndim == 1:
        return float(np.linalg.norm(eps))
    return np.linalg.norm(eps, axis=1)


def naive_fit(epsilon_train, A_train, eta=density.DEFAULT_ETA):
    """Cut-off at the crossing of the class-conditional naive score densities."""
    labels = np.asarray(A_train)
    scores = naive_scores(epsilon_train)
    scores_u, scores_c = _class_split(np.atleast_1d(scores), labels)
    f_u = density.fit_kde(scores_u)
    f_c = density.fit_kde(scores_c)
    return density.intersection_cutoff(f_u, f_c, eta=eta).cutoff
