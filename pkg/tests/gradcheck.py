"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from pinet.losses import pi_loss
from pinet.net import PiNetwork, init_layers

STEP = 1e-5
KINK_MARGIN = 1e-3


def loss_at(net, x, y, tau):
    return float(pi_loss(net.predict(x[None, :])[0], y, tau))


def numeric_grads(net, x, y, tau, h=STEP):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            up = loss_at(net, x, y, tau)
            p[i] = orig - h
            down = loss_at(net, x, y, tau)
            p[i] = orig
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def near_kink(net, x, y, margin=KINK_MARGIN):
    """True when a ReLU input, a head gap, or a residual is within ``margin`` of 0."""
    a = x[None, :]
    for layer in net.layers[:-1]:
        z = a @ layer.weight.T + layer.bias
        if np.any(np.abs(z) < margin):
            return True
        a = np.maximum(z, 0)
    z = (a @ net.layers[-1].weight.T + net.layers[-1].bias)[0]
    t = net.predict(x[None, :])[0]
    gaps = (z[1] - t[0], z[2] - t[1])
    if any(abs(g) < margin for g in gaps):
        return True
    return any(abs(y - q) < margin for q in t)


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, f in zip(analytic, numeric):
        den = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float(np.max(np.abs(a - f) / den)))
    return worst


def random_case(rng, d=None, hidden=None):
    """A random net, input, response and level that stays clear of every kink."""
    while True:
        dd = d or int(rng.integers(1, 5))
        hh = hidden or tuple(int(k) for k in rng.integers(2, 6, size=rng.integers(1, 3)))
        net = PiNetwork(init_layers([dd, *hh, 3], rng))
        for layer in net.layers:  # larger scale spreads the head outputs apart
            layer.weight *= 2.0
        x = rng.normal(size=dd)
        y = float(rng.normal(scale=2.0))
        tau = float(rng.uniform(0.02, 0.98))
        if not near_kink(net, x, y):
            return net, x, y, tau
