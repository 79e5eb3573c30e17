"""
Core Package
============

Algorithms of the detection selection toolkit: geometry, scene rendering,
detection simulation, suppression baselines, decoders, reconstruction,
greedy selection and metrics. Nothing in here configures logging or
touches the CLI.
"""
