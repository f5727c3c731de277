from .collect import CollectConfig, EVENT_EST_DIVERGED, WorkerPool
from .networks import PolicyNet, QNet
from .observations import (
    ObservationStack,
    POLICY_DIM,
    Q_DIM,
    STACK,
    policy_frame,
    q_frame,
)
from .replay import ReplayBuffer
from .sac import SACConfig, SACTrainer

__all__ = [
    "CollectConfig",
    "EVENT_EST_DIVERGED",
    "ObservationStack",
    "POLICY_DIM",
    "PolicyNet",
    "Q_DIM",
    "QNet",
    "ReplayBuffer",
    "SACConfig",
    "SACTrainer",
    "STACK",
    "WorkerPool",
    "policy_frame",
    "q_frame",
]
