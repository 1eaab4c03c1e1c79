"""Scene-graph-conditioned RL navigation harness (2D kinematic simulator)."""

__version__ = "0.1.0"
