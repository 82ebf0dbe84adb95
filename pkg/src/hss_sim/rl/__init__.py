"""From-scratch DQN machinery shared by both agents."""
from .backend import BACKEND, available_backends
from .learning import Experience, Optimizer, ReplayBuffer, c51_project, compute_targets, train_step
from .network import (MIGRATION_HP, PLACEMENT_HP, Hyperparameters, Network, select_action, swish,
                      sync)

__all__ = [
    "BACKEND", "Experience", "Hyperparameters", "MIGRATION_HP", "Network", "Optimizer",
    "PLACEMENT_HP", "ReplayBuffer", "available_backends", "c51_project", "compute_targets",
    "select_action", "swish", "sync", "train_step",
]
