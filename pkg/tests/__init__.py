"""Tests for qcert."""
