"""
GroundKit CLI
Command-line entry point, run configuration and self-test
"""

from .config import RunConfig, settings

__all__ = ['RunConfig', 'settings']
