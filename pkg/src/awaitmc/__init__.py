"""Stateless model checking with await statements and loop-purity elimination."""

__version__ = "0.1.0"
