"""Workflow cost orchestration: duration prediction and minimum-cost
device/configuration scheduling under precedence, time-window and
tiered-pricing constraints."""

__version__ = "0.1.0"
