"""Medication-response detection from smartphone active tests."""

__version__ = "0.1.0"
