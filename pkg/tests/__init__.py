"""Unit tests for the ouestimation package."""
