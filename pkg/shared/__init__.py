"""
Shared definitions for GroundKit
Constants, logging and the VQA data model used by every other package
"""
