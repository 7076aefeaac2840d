"""Tests for bicm-mmse."""
