#!/usr/bin/env python3
"""Print the taxonomy labels of every named trajectory fixture."""

from conceptdrift.generator import FIXTURES, build_fixture_trajectory, fixture_params
from conceptdrift.measures import DistanceFunction
from conceptdrift.taxonomy import classify_trajectory

SHAPE_LABELS = ("gradual", "incremental", "probabilistic")

for name, fx in FIXTURES.items():
    report = classify_trajectory(build_fixture_trajectory(name), DistanceFunction.HELLINGER_JOINT, fixture_params(name))
    print(f"{name}: {fx.description}")
    for ep in report.episodes:
        shape = ", ".join(l for l in SHAPE_LABELS if l in ep.labels) or "-"
        print(f"  S{ep.from_segment}->S{ep.to_segment} [{ep.start:g}, {ep.end:g}]  magnitude={ep.measures.magnitude:.4f}  shape: {shape}")
    extras = []
    if report.recurring:
        extras.append("recurring")
    if report.strict_blips:
        extras.append(f"strict blip at segment(s) {list(report.strict_blips)}")
    if report.cyclical and report.cyclical.cyclical:
        extras.append("cyclical")
    if extras:
        print("  " + "; ".join(extras))
