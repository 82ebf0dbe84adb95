"""The placement and migration agents, their rewards, and the migration queue."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .rl import (Hyperparameters, Network, Optimizer, ReplayBuffer, select_action, sync,
                 train_step)


class LatencyNormalizer:
    """Expresses latencies in units of the smallest latency seen so far.

    Seeded with the fastest possible request so placement rewards
    ``1 / normalized_latency`` lie in (0, 1] from the first request on.
    """

    def __init__(self, floor_us: float):
        if floor_us <= 0:
            raise ValueError("floor_us must be positive")
        self.ref_us = floor_us

    def __call__(self, latency_us: float) -> float:
        if latency_us < self.ref_us:
            self.ref_us = latency_us
        return latency_us / self.ref_us


def placement_reward(normalized_latency: float) -> float:
    return 1.0 / normalized_latency


@dataclass(frozen=True)
class MigrationRewardConfig:
    n: int = 50
    x: int = 10
    beta: float = 0.1
    # also learn from scanned pages the agent chose to leave in place
    credit_stays: bool = False

    def __post_init__(self):
        if self.n < 1 or self.x < 1:
            raise ValueError("reward horizon n and batch x must be >= 1")
        if self.beta < 0:
            raise ValueError("penalty beta must be >= 0")


def migration_penalty(beta: float, acc_intervals: Iterable[float], migr_intervals: Iterable[float]) -> float:
    acc = list(acc_intervals)
    mig = list(migr_intervals)
    if not acc:
        return 0.0
    return beta * (1.0 / (1.0 + sum(acc) / len(acc)) + 1.0 / (1.0 + sum(mig) / len(mig)))


def migration_reward(normalized_latencies, beta: float, acc_intervals, migr_intervals) -> float:
    lat = list(normalized_latencies)
    return len(lat) / sum(lat) - migration_penalty(beta, acc_intervals, migr_intervals)


class _Learner:
    """Training/inference network pair with a replay buffer."""

    def __init__(self, num_actions: int, hp: Hyperparameters, rng: np.random.Generator,
                 kernels=None, training: Network | None = None, buffer: ReplayBuffer | None = None):
        self.hp = hp
        self.rng = rng
        self.num_actions = num_actions
        self.training = training or Network.from_hp(num_actions, hp, rng=rng, kernels=kernels)
        self.inference = self.training.clone()
        self.buffer = buffer if buffer is not None else ReplayBuffer(hp.buffer_size)
        self.optimizer = Optimizer(self.training, hp.learning_rate, hp.optimizer)
        self.train_enabled = True
        self.losses: list[tuple[int, float]] = []
        self.train_steps = 0

    def act(self, x) -> int:
        if self.hp.random_warmup and len(self.buffer) < self.hp.batch_size:
            return int(self.rng.integers(self.num_actions))
        return select_action(self.inference, x, self.hp.epsilon, self.rng)

    def step_training(self, request_index: int) -> float | None:
        if not self.train_enabled or len(self.buffer) < self.hp.batch_size:
            return None
        # one training step = several minibatch updates
        total = 0.0
        for _ in range(self.hp.batches_per_step):
            idx = self.buffer.sample_indices(self.hp.batch_size, self.rng)
            total += train_step(self.training, self.inference, self.buffer.batch(idx), self.hp,
                                self.optimizer)
        loss = total / self.hp.batches_per_step
        self.train_steps += 1
        self.losses.append((request_index, loss))
        return loss

    def sync(self) -> None:
        sync(self.training, self.inference)


class PlacementAgent(_Learner):
    """Chooses the device for each write; rewarded by 1/latency of that request."""

    def __init__(self, num_devices: int, hp: Hyperparameters, rng: np.random.Generator,
                 normalizer: LatencyNormalizer, **kw):
        super().__init__(num_devices, hp, rng, **kw)
        self.normalizer = normalizer
        self.pending: list | None = None  # [state, action, reward]
        self.decisions = 0
        self.experiences = 0

    def place(self, x) -> int:
        self._complete(x)
        action = self.act(x)
        self.pending = [x, action, None]
        self.decisions += 1
        return action

    def reward(self, latency_us: float) -> float:
        r = placement_reward(self.normalizer(latency_us))
        self.pending[2] = r
        return r

    def _complete(self, next_state) -> None:
        if self.pending is None:
            return
        state, action, r = self.pending
        self.buffer.push(state, action, 0.0 if r is None else r, next_state)
        self.experiences += 1
        self.pending = None

    def finish(self) -> None:
        if self.pending is not None:
            self._complete(self.pending[0])


class MigrationQueue:
    """Bounded FIFO of (page, target); at most one entry per page."""

    def __init__(self, capacity: int = 10):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self._q: deque[tuple[int, int]] = deque()
        self._pages: dict[int, int] = {}

    def __len__(self):
        return len(self._q)

    def __contains__(self, page: int) -> bool:
        return page in self._pages

    def __iter__(self):
        return iter(self._q)

    @property
    def free_slots(self) -> int:
        return self.capacity - len(self._q)

    def full(self) -> bool:
        return len(self._q) >= self.capacity

    def push(self, page: int, target: int) -> bool:
        if page in self._pages or self.full():
            return False
        self._q.append((page, target))
        self._pages[page] = target
        return True

    def peek(self) -> tuple[int, int]:
        return self._q[0]

    def pop(self) -> tuple[int, int]:
        page, target = self._q.popleft()
        del self._pages[page]
        return page, target

    def target_of(self, page: int) -> int | None:
        return self._pages.get(page)

    def remove(self, page: int) -> int:
        target = self._pages.pop(page)
        self._q.remove((page, target))
        return target


class _MigrationRecord:
    __slots__ = ("page", "state", "action", "acc_intr", "migr_intr", "cost_us")

    def __init__(self, page, state, action):
        self.page, self.state, self.action = page, state, action
        self.acc_intr = 0
        self.migr_intr = 0
        self.cost_us = 0.0


class MigrationAgent(_Learner):
    """Nominates pages for background migration.

    Coordinated mode (default): after ``x`` nominated pages have physically
    moved, the next ``n`` request latencies give one shared delayed reward
    ``n / sum(normalized latency) - penalty``. Uncoordinated mode rewards each
    migration with its own negated, normalized device cost.

    With ``cfg.credit_stays``, a scanned page left in place is an experience
    too. Every ``x`` such decisions form a batch rewarded ``n / sum(normalized
    latency)`` over the following ``n`` requests, with no ping-pong penalty
    (uncoordinated mode: reward 0, as nothing moved).
    """

    def __init__(self, num_devices: int, hp: Hyperparameters, rng: np.random.Generator,
                 normalizer: LatencyNormalizer, cfg: MigrationRewardConfig,
                 observe_page: Callable[[int], np.ndarray], coordinated: bool = True, **kw):
        super().__init__(num_devices, hp, rng, **kw)
        self.normalizer = normalizer
        self.cfg = cfg
        self.observe_page = observe_page
        self.coordinated = coordinated
        self.enqueued: dict[int, _MigrationRecord] = {}
        self.open_batch: list[_MigrationRecord] = []
        self.stays: list[_MigrationRecord] = []
        # [moved, stays, sum_normalized_latency, count]
        self.settling: deque[list] = deque()
        self.cost_ref_us = 0.0
        self.nominations = 0
        self.stay_decisions = 0
        self.experiences = 0
        self.settled_batches = 0
        self.zero_reward = 0

    # nomination -----------------------------------------------------------
    def consider(self, page: int, x, curr_dev: int, queue: MigrationQueue,
                 has_room: Callable[[int], bool]) -> bool:
        """Evaluate one scanned page; enqueue it if the agent picks another device."""
        if page in queue:
            return False
        action = self.act(x)
        if action == curr_dev or not has_room(action) or not queue.push(page, action):
            self._stay(_MigrationRecord(page, x, action))
            return False
        self.enqueued[page] = _MigrationRecord(page, x, action)
        self.nominations += 1
        return True

    def _stay(self, rec: _MigrationRecord) -> None:
        if not self.cfg.credit_stays:
            return
        self.stay_decisions += 1
        if not self.coordinated:
            self._push(rec, 0.0)
            return
        self.stays.append(rec)
        if len(self.stays) >= self.cfg.x:
            self.settling.append([[], self.stays, 0.0, 0])
            self.stays = []

    @property
    def decisions(self) -> int:
        return self.nominations + self.stay_decisions

    # outcome of a nominated entry ----------------------------------------
    def migrated(self, page: int, acc_intr: int, migr_intr: int, cost_us: float) -> None:
        rec = self.enqueued.pop(page)
        rec.acc_intr, rec.migr_intr, rec.cost_us = acc_intr, migr_intr, cost_us
        if not self.coordinated:
            self.cost_ref_us = max(self.cost_ref_us, cost_us)
            self._push(rec, -cost_us / self.cost_ref_us if self.cost_ref_us > 0 else 0.0)
            return
        self.open_batch.append(rec)
        if len(self.open_batch) >= self.cfg.x:
            self.settling.append([self.open_batch, [], 0.0, 0])
            self.open_batch = []

    def dropped(self, page: int) -> None:
        """A queued entry went stale before it could move: settles with reward 0."""
        rec = self.enqueued.pop(page, None)
        if rec is not None:
            self._push(rec, 0.0)
            self.zero_reward += 1

    def observe_latency(self, latency_us: float) -> None:
        if not self.settling:
            return
        lat = self.normalizer(latency_us)
        n = self.cfg.n
        for entry in self.settling:
            entry[2] += lat
            entry[3] += 1
        while self.settling and self.settling[0][3] >= n:
            moved, stays, total, count = self.settling.popleft()
            base = count / total
            for rec in stays:
                self._push(rec, base)
            if moved:
                r = base - migration_penalty(self.cfg.beta, (rec.acc_intr for rec in moved),
                                             (rec.migr_intr for rec in moved))
                for rec in moved:
                    self._push(rec, r)
                self.settled_batches += 1

    def _push(self, rec: _MigrationRecord, reward: float) -> None:
        self.buffer.push(rec.state, rec.action, reward, self.observe_page(rec.page))
        self.experiences += 1

    def finish(self) -> None:
        """Close out everything still open with reward 0."""
        for rec in list(self.enqueued.values()):
            self._push(rec, 0.0)
            self.zero_reward += 1
        self.enqueued.clear()
        leftovers = self.open_batch + self.stays + [
            r for entry in self.settling for r in entry[0] + entry[1]]
        for rec in leftovers:
            self._push(rec, 0.0)
            self.zero_reward += 1
        self.open_batch, self.stays = [], []
        self.settling.clear()

    @property
    def open_records(self) -> int:
        return (len(self.enqueued) + len(self.open_batch) + len(self.stays)
                + sum(len(e[0]) + len(e[1]) for e in self.settling))
