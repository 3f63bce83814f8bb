"""Test suite for lowrank-varx-id."""
