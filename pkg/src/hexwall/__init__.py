"""Structured hexahedral meshing of vessel walls, thrombus tetrahedral fill,
element quality audits and linear wall-stress analysis."""

__version__ = "0.1.0"
