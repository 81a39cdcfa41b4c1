"""Proximal point method: runs, worst-case SDP, and dual certificates."""

from .schedule import ScheduleError, Separator, StepSchedule, random_schedule

__all__ = ["ScheduleError", "Separator", "StepSchedule", "random_schedule"]
