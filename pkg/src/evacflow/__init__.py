"""Evacuation-behavior analytics from mobile-device GPS pings.

Stages: ingest raw pings into clean per-user tracks, infer proxy homes,
extract stay-point activities, classify users into seven evacuation
groups against zone geometry and order timelines, and aggregate rates,
response curves, and representativeness diagnostics.
"""

__version__ = "0.1.0"
