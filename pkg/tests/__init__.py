"""
Test suite for GroundKit
Run with: pytest  (slow end-to-end runs: pytest -m slow)
"""
