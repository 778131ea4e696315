"""Hierarchical social navigation at desk scale: simulator, planner, learned
local planner / velocity controller, expert, baselines, metrics and CLI."""

__version__ = "0.1.0"
