"""Curriculum learning for stepping-stone locomotion on a point-foot stepper."""
__version__ = "0.1.0"
