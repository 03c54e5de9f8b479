"""Closed-loop motion planning with a reliability-weighted trajectory predictor."""

__version__ = "0.1.0"
