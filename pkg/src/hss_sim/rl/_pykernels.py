"""Numpy implementation of the network kernels (fallback backend).

Shapes: ``w1 (H, D)``, ``b1 (H,)``, ``w2 (A*N, H)``, ``b2 (A*N,)``. With
``N == 1`` the head is scalar and no softmax is applied.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _hidden(w1, b1, x):
    pre = x @ w1.T + b1
    return pre, pre * _sigmoid(pre)


def _softmax_rows(logits):
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(w1, b1, w2, b2, x, num_actions, num_atoms, support):
    """Returns ``(probs (B, A, N), q (B, A))``."""
    _, h = _hidden(w1, b1, x)
    logits = (h @ w2.T + b2).reshape(x.shape[0], num_actions, num_atoms)
    if num_atoms == 1:
        return np.ones_like(logits), logits[:, :, 0].copy()
    probs = _softmax_rows(logits)
    return probs, probs @ support


def q_values(w1, b1, w2, b2, x, num_actions, num_atoms, support):
    _, q = forward_batch(w1, b1, w2, b2, x.reshape(1, -1), num_actions, num_atoms, support)
    return q[0]


def c51_project(rewards, gamma, next_probs, support):
    """Categorical projection of ``r + gamma * z`` onto ``support`` per row."""
    rewards = np.asarray(rewards, dtype=np.float64)
    next_probs = np.asarray(next_probs, dtype=np.float64)
    n = support.shape[0]
    out = np.zeros_like(next_probs)
    if n == 1:
        out[:] = 1.0
        return out
    v_min, v_max = support[0], support[-1]
    dz = (v_max - v_min) / (n - 1)
    tz = np.clip(rewards[:, None] + gamma * support[None, :], v_min, v_max)
    b = (tz - v_min) / dz
    lo = np.floor(b).astype(np.int64)
    np.clip(lo, 0, n - 1, out=lo)
    hi = np.minimum(lo + 1, n - 1)
    frac = b - lo
    rows = np.broadcast_to(np.arange(next_probs.shape[0])[:, None], lo.shape)
    np.add.at(out, (rows, lo), next_probs * (1.0 - frac))
    np.add.at(out, (rows, hi), next_probs * frac)
    return out


def loss_and_grads(w1, b1, w2, b2, x, actions, targets, num_actions, num_atoms):
    """Loss and parameter gradients for a batch.

    Categorical head: mean cross-entropy between ``targets (B, N)`` and the
    predicted distribution of the taken action. Scalar head: mean squared
    error against ``targets (B, 1)``.
    """
    bsz = x.shape[0]
    pre, h = _hidden(w1, b1, x)
    logits = (h @ w2.T + b2).reshape(bsz, num_actions, num_atoms)
    rows = np.arange(bsz)
    taken = logits[rows, actions]
    dlogits = np.zeros_like(logits)
    if num_atoms == 1:
        err = taken[:, 0] - targets[:, 0]
        loss = float(np.mean(err * err))
        dlogits[rows, actions, 0] = 2.0 * err / bsz
    else:
        m = taken.max(axis=1, keepdims=True)
        shifted = taken - m
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        loss = float(-np.mean(np.sum(targets * logp, axis=1)))
        p = np.exp(logp)
        dlogits[rows, actions] = (p * targets.sum(axis=1, keepdims=True) - targets) / bsz
    d_out = dlogits.reshape(bsz, num_actions * num_atoms)
    gw2 = d_out.T @ h
    gb2 = d_out.sum(axis=0)
    dh = d_out @ w2
    s = _sigmoid(pre)
    dpre = dh * (s + pre * s * (1.0 - s))
    gw1 = dpre.T @ x
    gb1 = dpre.sum(axis=0)
    return loss, gw1, gb1, gw2, gb2


def dqn_loss_and_grads(train_params, select_params, boot_params, x, actions, rewards, next_x,
                       gamma, num_actions, num_atoms, support):
    """Target construction fused with :func:`loss_and_grads`.

    a* = argmax over ``select_params``' Q at ``next_x``; the bootstrap
    distribution (or scalar Q) of a* comes from ``boot_params``.
    """
    probs, q = forward_batch(*select_params, next_x, num_actions, num_atoms, support)
    best = np.argmax(q, axis=1)
    if boot_params is not select_params:
        probs, q = forward_batch(*boot_params, next_x, num_actions, num_atoms, support)
    rows = np.arange(len(best))
    if num_atoms == 1:
        targets = (rewards + gamma * q[rows, best])[:, None]
    else:
        targets = c51_project(rewards, gamma, probs[rows, best], support)
    return loss_and_grads(*train_params, x, actions, targets, num_actions, num_atoms)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, c1, c2):
    """In-place Adam step; ``c1``/``c2`` are the bias corrections."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
