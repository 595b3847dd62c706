"""Persona-driven street-crossing simulation and human/persona cohort statistics."""

__version__ = "0.1.0"
