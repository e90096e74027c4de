"""Test suite for psim."""
