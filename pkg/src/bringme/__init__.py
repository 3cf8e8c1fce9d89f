"""Knowledge-grounded planner for ambiguous fetch commands."""

__version__ = "0.1.0"
