"""Discrete-event simulator of a cognitive-radio ad hoc disaster-response network."""

__version__ = "0.1.0"
