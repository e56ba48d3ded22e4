"""eitlock: simulate and analyze locking a laser to an excited-state
transition through the ladder-EIT response of a thermal vapor."""

__version__ = "0.1.0"
