"""Feed-forward PI-network: affine/ReLU layers, a monotone three-output head,
hand-written reverse-mode gradients and a minibatch training loop.

Row convention: inputs are ``(n, d)``, weights are ``(out, in)``, so a layer
computes ``a @ W.T + b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, NumericError, ShapeError, TrainingError
from .intervals import PiTriple
from .losses import VAR_FLOOR, gaussian_nll_grad, pi_loss_grad, softplus

HEAD_TAG = "monotone-relu"


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"  # "relu" | "identity"


def init_layers(sizes, rng):
    """Fan-in scaled uniform init, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / math.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        b = rng.uniform(-bound, bound, size=n_out)
        act = "identity" if i == len(sizes) - 2 else "relu"
        layers.append(Layer(w, b, act))
    return layers


def _forward(layers, X, keep=False):
    a = X
    cache = []
    for i, layer in enumerate(layers):
        z = a @ layer.weight.T + layer.bias
        if keep:
            if not np.all(np.isfinite(z)):
                raise NumericError(f"non-finite pre-activation in layer {i}")
            cache.append((a, z))
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return a, cache


def _backward(layers, cache, g):
    """Backpropagate ``g = dL/d(output)`` (already averaged) to parameter grads."""
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        a, z = cache[i]
        if layer.activation == "relu":
            g = g * (z > 0)
        dW = g.T @ a
        db = g.sum(axis=0)
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
            raise NumericError(f"non-finite gradient in layer {i}")
        grads.append((dW, db))
        g = g @ layer.weight
    grads.reverse()
    return grads


def monotone_head(z1, z2, z3):
    """Reorder-free monotone map ``(z1, z2, z3) -> (l, m, u)`` with ``l <= m <= u``."""
    vals = (float(z1), float(z2), float(z3))
    if not all(math.isfinite(v) for v in vals):
        raise DomainError(f"monotone_head needs finite inputs, got {vals}")
    l = vals[0]
    m = l + max(0.0, vals[1] - l)
    u = m + max(0.0, vals[2] - m)
    return PiTriple(l, m, u)


def _head(Z):
    out = np.empty_like(Z)
    out[:, 0] = Z[:, 0]
    out[:, 1] = out[:, 0] + np.maximum(Z[:, 1] - out[:, 0], 0.0)
    out[:, 2] = out[:, 1] + np.maximum(Z[:, 2] - out[:, 1], 0.0)
    return out


def _head_backward(Z, T, G):
    """Gradient of the head: ``Z`` raw, ``T`` head output, ``G = dL/dT``."""
    s2 = (Z[:, 1] - T[:, 0]) > 0
    s3 = (Z[:, 2] - T[:, 1]) > 0
    g_m = G[:, 1] + G[:, 2] * ~s3
    dZ = np.empty_like(G)
    dZ[:, 2] = G[:, 2] * s3
    dZ[:, 1] = g_m * s2
    dZ[:, 0] = G[:, 0] + g_m * ~s2
    return dZ


class _MLP:
    def __init__(self, layers, meta=None):
        self.layers = list(layers)
        self.meta = dict(meta or {})

    @property
    def d(self):
        return self.layers[0].weight.shape[1]

    @property
    def hidden(self):
        return tuple(layer.weight.shape[0] for layer in self.layers[:-1])

    def _check_X(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ShapeError(f"expected inputs with {self.d} features, got shape {X.shape}")
        return X

    def raw(self, X):
        return _forward(self.layers, self._check_X(X))[0]

    def params(self):
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self):
        layers = [Layer(L.weight.copy(), L.bias.copy(), L.activation) for L in self.layers]
        return type(self)(layers, meta=self.meta)


class PiNetwork(_MLP):
    """Network ``R^d -> R^3`` whose outputs pass through the monotone head."""

    head = HEAD_TAG

    @property
    def tau(self):
        return self.meta.get("tau")

    @property
    def history(self):
        return self.meta.get("history", [])

    def predict(self, X):
        """``(n, 3)`` array of ``(l, m, u)`` rows."""
        return _head(self.raw(X))

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ShapeError(f"forward takes a single input vector, got shape {x.shape}")
        return PiTriple(*map(float, self.predict(x)[0]))

    def loss_and_grads(self, X, y, tau):
        """Mean PI loss over the batch and its gradient for every layer."""
        X = self._check_X(X)
        Z, cache = _forward(self.layers, X, keep=True)
        T = _head(Z)
        loss, G = pi_loss_grad(T, np.asarray(y, dtype=float), tau)
        dZ = _head_backward(Z, T, G) / len(X)
        return float(loss.mean()), _backward(self.layers, cache, dZ)


class TrivialNetwork:
    """The ``tau = 0`` network: ``l = -inf``, ``u = +inf`` everywhere.

    The median column is borrowed from ``median_from`` when given, else 0.
    """

    tau = 0.0

    def __init__(self, d, median_from=None):
        self.d = d
        self.median_from = median_from

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.d:
            raise ShapeError(f"expected inputs with {self.d} features, got shape {X.shape}")
        out = np.empty((len(X), 3))
        out[:, 0] = -np.inf
        out[:, 2] = np.inf
        out[:, 1] = 0.0 if self.median_from is None else self.median_from.predict(X)[:, 1]
        return out

    def forward(self, x):
        return PiTriple(*map(float, self.predict(x)[0]))


class GaussianNetwork(_MLP):
    """Two-output mean/variance network trained with the Gaussian NLL."""

    head = "gaussian-softplus"

    def predict_params(self, X):
        raw = self.raw(X)
        return raw[:, 0], softplus(raw[:, 1]) + VAR_FLOOR

    def predict(self, X):
        """``(n, 3)`` rows ``(mu - z*sd, mu, mu + z*sd)`` at the stored alpha."""
        return self.predict_interval(X, self.meta.get("alpha", 0.1))

    def predict_interval(self, X, alpha):
        mu, var = self.predict_params(X)
        half = ndtri(1 - alpha / 2) * np.sqrt(var)
        return np.stack([mu - half, mu, mu + half], axis=1)

    def loss_and_grads(self, X, y, tau=None):
        X = self._check_X(X)
        Z, cache = _forward(self.layers, X, keep=True)
        loss, dZ = gaussian_nll_grad(Z, np.asarray(y, dtype=float))
        return float(loss.mean()), _backward(self.layers, cache, dZ / len(X))


def _softplus_inv(v):
    return v + math.log(-math.expm1(-v))


def backward(net, x, y, tau):
    """Gradient of the PI loss at a single ``(x, y)`` for every ``(W, b)`` pair."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must be in (0, 1), got {tau}")
    if not (np.all(np.isfinite(x)) and math.isfinite(y)):
        raise DomainError("x and y must be finite")
    x = np.asarray(x, dtype=float)
    return net.loss_and_grads(x[None, :], np.array([float(y)]), tau)[1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if not self.lr > 0:
            raise DomainError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")


class SGD:
    def __init__(self, params, lr, momentum=0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads):
        for p, g, v in zip(self.params, grads, self.velocity):
            v *= self.momentum
            v += g
            p -= self.lr * v


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _make_optimizer(params, cfg):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.lr, cfg.momentum)
    return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


def _train(net, X, y, cfg, tau=None):
    n = len(X)
    if cfg.batch_size > n:
        raise DomainError(f"batch_size {cfg.batch_size} exceeds training set size {n}")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    params = net.params()
    opt = _make_optimizer(params, cfg)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = net.loss_and_grads(X[idx], y[idx], tau)
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}", epoch=epoch) from exc
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            opt.step([g for pair in grads for g in pair])
            total += loss * len(idx)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingError(f"non-finite weights after epoch {epoch}", epoch=epoch)
        history.append(total / n)
    return history


def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (len(X),):
        raise ShapeError(f"X must be (n, d) and y (n,), got {X.shape} and {y.shape}")
    if len(X) == 0:
        raise DomainError("cannot fit on an empty training set")
    return X, y


def fit(X, y, tau, cfg=TrainConfig(), hidden=(200,), init=None):
    """Train a PI-network at level ``tau`` by minimizing the empirical PI risk.

    ``init`` warm-starts from a copy of an existing network (its architecture
    wins over ``hidden``). The per-epoch mean loss is kept in ``net.history``.

    A fresh network starts with its output bias at the empirical
    ``tau/2, 1/2, 1 - tau/2`` quantiles of ``y``. With near-zero biases and a
    response far from 0, the median output climbs faster than the upper one
    and the upper ReLU gap can die for every input, freezing ``u = m``.
    """
    tau = float(tau)
    if tau == 0.0:
        raise DomainError("tau = 0 is the trivial network; use TrivialNetwork instead of fitting")
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"tau must be in (0, 1], got {tau}")
    X, y = _prepare(X, y)
    if init is not None:
        net = init.copy()
        if net.d != X.shape[1]:
            raise ShapeError("warm-start network has a different input dimension")
    else:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
        net = PiNetwork(init_layers([X.shape[1], *hidden, 3], rng))
        net.layers[-1].bias = np.quantile(y, [tau / 2, 0.5, 1 - tau / 2])
    history = _train(net, X, y, cfg, tau)
    net.meta = {"tau": tau, "seed": cfg.seed, "epochs": cfg.epochs, "history": history}
    return net


def fit_gaussian(X, y, cfg=TrainConfig(), hidden=(200,), alpha=0.1):
    """Train the mean/variance baseline by minimizing the Gaussian NLL."""
    X, y = _prepare(X, y)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
    net = GaussianNetwork(init_layers([X.shape[1], *hidden, 2], rng))
    # start at the marginal mean and variance, as fit() does for quantiles
    net.layers[-1].bias = np.array([y.mean(), _softplus_inv(max(y.var() - VAR_FLOOR, 1e-3))])
    history = _train(net, X, y, cfg)
    net.meta = {"alpha": alpha, "seed": cfg.seed, "epochs": cfg.epochs, "history": history}
    return net
