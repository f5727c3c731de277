from .domain import DomainConfig, SUPPORTS, effective_spinning_friction, sample_domain
from .environment import (
    CubeState,
    EVENT_DROPPED,
    EVENT_NONE,
    EVENT_OUT_OF_BOUNDS,
    EVENT_SUCCESS,
    EVENT_TIMEOUT_EPISODE,
    EVENT_TIMEOUT_GOAL,
    HandCubeEnv,
    ResetError,
    SimulationDiverged,
    StepResult,
    TERMINAL_EVENTS,
    check_termination,
)
from .hand import ControllerState, HandState, apply_action, fingertips
from .kernel import LANE, available_lanes
from .params import PhysicsParams

__all__ = [
    "CubeState",
    "ControllerState",
    "DomainConfig",
    "EVENT_DROPPED",
    "EVENT_NONE",
    "EVENT_OUT_OF_BOUNDS",
    "EVENT_SUCCESS",
    "EVENT_TIMEOUT_EPISODE",
    "EVENT_TIMEOUT_GOAL",
    "HandCubeEnv",
    "HandState",
    "LANE",
    "PhysicsParams",
    "ResetError",
    "SUPPORTS",
    "SimulationDiverged",
    "StepResult",
    "TERMINAL_EVENTS",
    "apply_action",
    "available_lanes",
    "check_termination",
    "effective_spinning_friction",
    "fingertips",
    "sample_domain",
]
