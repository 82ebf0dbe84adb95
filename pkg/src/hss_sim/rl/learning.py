"""Experience replay and the categorical (C51) / scalar DQN update."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .network import Hyperparameters, Network


class Experience(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool = False


class ReplayBuffer:
    """Fixed-size ring of experiences; the oldest entry is overwritten first."""

    def __init__(self, capacity: int = 1000, state_dim: int = 7):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.size = 0
        self.pushed = 0
        self._pos = 0

    def __len__(self):
        return self.size

    def push(self, state, action: int, reward: float, next_state) -> None:
        i = self._pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def push_experience(self, e: Experience) -> None:
        self.push(e.state, e.action, e.reward, e.next_state)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.size, size=batch_size)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]

    def get(self, i: int) -> Experience:
        """i-th oldest stored experience."""
        j = (self._pos - self.size + i) % self.capacity
        return Experience(self.states[j].copy(), int(self.actions[j]), float(self.rewards[j]),
                          self.next_states[j].copy())


def c51_project(reward, gamma: float, next_distribution, support, kernels=None) -> np.ndarray:
    """Project ``reward + gamma * Z`` back onto ``support``.

    Accepts a single distribution ``(N,)`` with a scalar reward or a batch
    ``(B, N)`` with ``(B,)`` rewards.
    """
    from . import backend

    k = kernels or backend.kernels
    p = np.asarray(next_distribution, dtype=np.float64)
    support = np.ascontiguousarray(support, dtype=np.float64)
    if p.ndim == 1:
        return k.c51_project(np.array([reward], dtype=np.float64), gamma, p[None, :], support)[0]
    return k.c51_project(np.asarray(reward, dtype=np.float64), gamma, p, support)


def compute_targets(inference: Network, rewards, next_states, gamma: float,
                    bootstrap: Network | None = None) -> np.ndarray:
    """Training targets.

    The greedy next action a* comes from the inference network. Its return
    distribution (or scalar Q) under ``bootstrap`` (default: the inference
    network) is the bootstrap. Categorical heads give ``(B, N)`` projected
    distributions; scalar heads ``(B, 1)`` TD targets.
    """
    probs, q = inference.forward_batch(next_states)
    best = np.argmax(q, axis=1)
    rows = np.arange(len(best))
    if bootstrap is not None and bootstrap is not inference:
        probs, q = bootstrap.forward_batch(next_states)
    if inference.num_atoms == 1:
        return (np.asarray(rewards) + gamma * q[rows, best])[:, None]
    return inference.kernels.c51_project(np.asarray(rewards, dtype=np.float64), gamma,
                                         np.ascontiguousarray(probs[rows, best]), inference.support)


class Optimizer:
    """Plain SGD, or Adam with default moments."""

    def __init__(self, net: Network, lr: float, kind: str = "sgd",
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.kind = lr, kind
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        if kind == "adam":
            self.m = [np.zeros_like(p) for p in net.params]
            self.v = [np.zeros_like(p) for p in net.params]

    def step(self, net: Network, grads) -> None:
        if self.kind == "sgd":
            for p, g in zip(net.params, grads):
                p -= self.lr * g
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        update = net.kernels.adam_update
        for p, g, m, v in zip(net.params, grads, self.m, self.v):
            update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1), m.reshape(-1),
                   v.reshape(-1), self.lr, self.beta1, self.beta2, self.eps, c1, c2)


def train_step(training: Network, inference: Network, batch, hp: Hyperparameters,
               optimizer: Optimizer | None = None) -> float | None:
    """One gradient step on ``batch = (states, actions, rewards, next_states)``.

    Returns the pre-update loss, or None for an empty batch.
    """
    states, actions, rewards, next_states = batch
    if len(actions) == 0:
        return None
    rewards = np.asarray(rewards, dtype=np.float64) * hp.reward_scale
    source = training if hp.bootstrap == "training" else inference
    sel = inference.params
    loss, *grads = training.kernels.dqn_loss_and_grads(
        training.params, sel, sel if source is inference else source.params,
        np.ascontiguousarray(states, dtype=np.float64), np.asarray(actions, dtype=np.int64),
        rewards, np.ascontiguousarray(next_states, dtype=np.float64), hp.gamma,
        training.num_actions, training.num_atoms, training.support)
    if optimizer is None:
        for p, g in zip(training.params, grads):
            p -= hp.learning_rate * g
    else:
        optimizer.step(training, grads)
    return loss
