"""Desk-scale lab for motion-guided deformable attention over video clips."""

__version__ = "0.1.0"
