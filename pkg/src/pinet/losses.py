"""Pinball loss, the three-quantile PI loss, and the Gaussian NLL baseline.

All functions broadcast over numpy arrays. Scalars in give scalars out.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

LOG_2PI = math.log(2.0 * math.pi)

# Positivity map for the neg-ll baseline: var = softplus(s) + VAR_FLOOR.
VAR_FLOOR = 1e-6


def _check_tau(tau, lo_open=False):
    tau = float(tau)
    if not (0.0 <= tau <= 1.0) or (lo_open and tau == 0.0):
        raise DomainError(f"tau must be in {'(0, 1]' if lo_open else '[0, 1]'}, got {tau}")
    return tau


def pinball(tau, u):
    """Asymmetric absolute loss ``(tau - 1{u <= 0}) * u``."""
    tau = _check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0, tau * u, (tau - 1.0) * u)
    return out[()] if out.ndim == 0 else out


def pinball_slope(tau, u):
    """Derivative of :func:`pinball` in ``u``; equals ``tau - 1`` at the kink."""
    u = np.asarray(u, dtype=float)
    return np.where(u > 0, tau, tau - 1.0)


def _as_triples(triple):
    t = np.asarray(triple, dtype=float)
    if t.shape[-1] != 3:
        raise DomainError(f"expected triples with last dimension 3, got shape {t.shape}")
    return t


def pi_loss(triple, y, tau):
    """Level-``tau`` PI loss of the triple ``(l, m, u)`` at response ``y``.

    ``h_{tau/2}(y - l) + h_{1/2}(y - m) + h_{1 - tau/2}(y - u)``.
    ``triple`` may be a single triple or an ``(n, 3)`` array.
    """
    tau = _check_tau(tau, lo_open=True)
    t = _as_triples(triple)
    if not np.all(np.isfinite(t)):
        raise DomainError("pi_loss is undefined for infinite interval endpoints")
    y = np.asarray(y, dtype=float)
    return (
        pinball(tau / 2, y - t[..., 0])
        + pinball(0.5, y - t[..., 1])
        + pinball(1 - tau / 2, y - t[..., 2])
    )


def pi_loss_grad(triples, y, tau):
    """Per-sample PI loss and its derivative with respect to each triple entry.

    Returns ``(loss, dloss)`` with shapes ``(n,)`` and ``(n, 3)``.
    """
    levels = np.array([tau / 2, 0.5, 1 - tau / 2])
    resid = np.asarray(y, dtype=float)[:, None] - triples
    loss = np.where(resid > 0, levels * resid, (levels - 1.0) * resid).sum(axis=1)
    # d/dq h(y - q) = -h'(y - q)
    dloss = -pinball_slope(levels, resid)
    return loss, dloss


def empirical_risk(net, X, y, tau):
    """Mean PI loss of ``net`` over the rows ``(X, y)``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DomainError("empirical risk over an empty set")
    return float(np.mean(pi_loss(net.predict(X), y, tau)))


def gaussian_nll(mu, var, y):
    """Negative log-density of ``N(mu, var)`` at ``y``."""
    var = np.asarray(var, dtype=float)
    if np.any(~(var > 0)):
        raise DomainError("variance must be positive")
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 0.5 * (LOG_2PI + np.log(var)) + (y - mu) ** 2 / (2.0 * var)
    return out[()] if out.ndim == 0 else out


def softplus(s):
    return np.logaddexp(0.0, s)


def gaussian_nll_grad(raw, y):
    """NLL and its gradient w.r.t. the raw ``(mu, s)`` outputs of the baseline net.

    The variance is ``softplus(s) + VAR_FLOOR``.
    """
    mu = raw[:, 0]
    s = raw[:, 1]
    var = softplus(s) + VAR_FLOOR
    r = y - mu
    loss = 0.5 * (LOG_2PI + np.log(var)) + r**2 / (2.0 * var)
    dmu = -r / var
    dvar = 0.5 / var - r**2 / (2.0 * var**2)
    ds = dvar * (0.5 * (1.0 + np.tanh(0.5 * s)))  # sigmoid, overflow-free
    return loss, np.stack([dmu, ds], axis=1)
