"""Test package for specrec."""
