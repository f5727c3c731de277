"""Tactile in-hand cube reorientation at desk scale.

Subpackages:
  rotations  quaternion algebra, cube symmetry group, goal enumeration
  env        surrogate hand-cube environment with domain randomization
  rewards    the three training reward functions
  policy     observations, SAC networks/trainer, replay, collection
  filter     differentiable particle filter and its training stages
  pipeline   the S1-S5 curriculum orchestrator
  bench      the 24-goal benchmark protocol and report emission
"""

__version__ = "0.1.0"
