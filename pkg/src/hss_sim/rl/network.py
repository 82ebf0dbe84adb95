"""Feed-forward Q-network (7-10-A*N, swish) with a categorical or scalar head."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend

INPUT_DIM = 7
HIDDEN_DIM = 10


@dataclass(frozen=True)
class Hyperparameters:
    gamma: float = 0.9
    learning_rate: float = 1e-3
    epsilon: float = 0.001
    batch_size: int = 128
    buffer_size: int = 1000
    num_atoms: int = 51
    v_min: float = -1.0
    v_max: float = 1.0
    sync_interval: int = 1000
    train_every: int = 10
    batches_per_step: int = 16
    optimizer: str = "adam"
    reward_scale: float = 1.0
    bootstrap: str = "inference"         # network whose next-state distribution is the target
    random_warmup: bool = True           # uniform actions until the buffer holds one batch

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < 1:
            raise ValueError("batch_size and buffer_size must be positive")
        if not 1 <= self.num_atoms <= 256:
            raise ValueError("num_atoms must lie in 1..256")
        if self.num_atoms > 1 and not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.sync_interval < 1 or self.train_every < 1 or self.batches_per_step < 1:
            raise ValueError("sync_interval, train_every and batches_per_step must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if not self.reward_scale > 0:
            raise ValueError("reward_scale must be positive")
        if self.bootstrap not in ("inference", "training"):
            raise ValueError("bootstrap must be 'inference' or 'training'")


PLACEMENT_HP = Hyperparameters(gamma=0.9, learning_rate=1e-3, batch_size=128)
MIGRATION_HP = Hyperparameters(gamma=0.1, learning_rate=1e-2, batch_size=256)


class Network:
    """Dense 7 -> 10 (swish) -> A*N network.

    Weights are initialised uniformly in +-1/sqrt(fan_in). ``kernels`` selects
    the numeric backend (defaults to the import-time choice).
    """

    def __init__(self, num_actions: int, num_atoms: int = 51, v_min: float = -1.0,
                 v_max: float = 1.0, rng: np.random.Generator | None = None,
                 hidden_dim: int = HIDDEN_DIM, input_dim: int = INPUT_DIM, kernels=None):
        if num_actions < 1:
            raise ValueError("num_actions must be positive")
        if hidden_dim > 64:
            raise ValueError("hidden_dim is limited to 64")
        self.num_actions = num_actions
        self.num_atoms = num_atoms
        self.kernels = kernels or backend.kernels
        if num_atoms == 1:
            self.support = np.zeros(1)
        else:
            self.support = np.linspace(v_min, v_max, num_atoms)
        rng = rng if rng is not None else np.random.default_rng(0)
        lim1 = 1.0 / math.sqrt(input_dim)
        lim2 = 1.0 / math.sqrt(hidden_dim)
        nout = num_actions * num_atoms
        self.w1 = rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim))
        self.b1 = rng.uniform(-lim1, lim1, size=hidden_dim)
        self.w2 = rng.uniform(-lim2, lim2, size=(nout, hidden_dim))
        self.b2 = rng.uniform(-lim2, lim2, size=nout)

    @classmethod
    def from_hp(cls, num_actions: int, hp: Hyperparameters, rng=None, kernels=None) -> "Network":
        return cls(num_actions, hp.num_atoms, hp.v_min, hp.v_max, rng=rng, kernels=kernels)

    @property
    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    @property
    def weight_count(self) -> int:
        """Number of weights excluding biases."""
        return self.w1.size + self.w2.size

    def forward(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-action distribution ``(A, N)`` and Q-values ``(A,)`` for one input."""
        probs, q = self.forward_batch(np.asarray(x, dtype=np.float64).reshape(1, -1))
        return probs[0], q[0]

    def forward_batch(self, x) -> tuple[np.ndarray, np.ndarray]:
        return self.kernels.forward_batch(self.w1, self.b1, self.w2, self.b2,
                                          np.ascontiguousarray(x, dtype=np.float64),
                                          self.num_actions, self.num_atoms, self.support)

    def q_values(self, x) -> np.ndarray:
        return self.kernels.q_values(self.w1, self.b1, self.w2, self.b2, x,
                                     self.num_actions, self.num_atoms, self.support)

    def loss_and_grads(self, x, actions, targets):
        return self.kernels.loss_and_grads(self.w1, self.b1, self.w2, self.b2, x, actions,
                                           targets, self.num_actions, self.num_atoms)

    def copy_from(self, other: "Network") -> None:
        if [p.shape for p in self.params] != [p.shape for p in other.params]:
            raise ValueError("network shapes differ")
        for dst, src in zip(self.params, other.params):
            dst[...] = src
        self.support = other.support.copy()

    def clone(self) -> "Network":
        net = Network.__new__(Network)
        net.num_actions, net.num_atoms, net.kernels = self.num_actions, self.num_atoms, self.kernels
        net.support = self.support.copy()
        net.w1, net.b1, net.w2, net.b2 = (p.copy() for p in self.params)
        return net

    def save(self, path, half_precision: bool = False) -> None:
        """Write a text checkpoint: one shape line per tensor, then the values."""
        dtype = np.float16 if half_precision else np.float64
        with open(path, "w") as fh:
            fh.write(f"# actions={self.num_actions} atoms={self.num_atoms} "
                     f"support={float(self.support[0])!r},{float(self.support[-1])!r}\n")
            for name, p in zip(("w1", "b1", "w2", "b2"), self.params):
                fh.write(f"{name} {' '.join(map(str, p.shape))}\n")
                fh.write(" ".join(repr(float(v)) for v in p.astype(dtype).ravel()) + "\n")

    @classmethod
    def load(cls, path, kernels=None) -> "Network":
        with open(path) as fh:
            head = fh.readline().split()
            meta = dict(kv.split("=") for kv in head[1:])
            lo, hi = (float(v) for v in meta["support"].split(","))
            net = cls(int(meta["actions"]), int(meta["atoms"]), lo, hi, kernels=kernels)
            for p in net.params:
                fh.readline()
                p[...] = np.array(fh.readline().split(), dtype=np.float64).reshape(p.shape)
        return net


def swish(z):
    return z / (1.0 + np.exp(-z))


def select_action(net: Network, x, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(net.num_actions))
    return int(np.argmax(net.q_values(x)))


def sync(training: Network, inference: Network) -> None:
    inference.copy_from(training)
