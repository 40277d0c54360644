#!/usr/bin/env python3
"""Run the prequential harness against a learner living in another process.

By default the learner is the bundled echo learner, which always answers
class 0.  Any program speaking the same line protocol can be passed instead:

    python3 scripts/external_learner_demo.py -- my-learner --flag
"""

import sys

from conceptdrift.generator import DriftKind, DriftSpec, generate_stream
from conceptdrift.harness import ExternalLearner, MajorityClass, prequential_evaluate

command = sys.argv[sys.argv.index("--") + 1:] if "--" in sys.argv else [sys.executable, "-m", "conceptdrift.echo_learner"]
spec = DriftSpec(DriftKind.PURE_CLASS, 0.5, drift_time=2000, length=5000, seed=7)
stream, truth = generate_stream(spec)
with ExternalLearner(spec.schema, command) as learner:
    curve = prequential_evaluate(learner, stream, window=1000)
reference = prequential_evaluate(MajorityClass(spec.schema), stream, window=1000)
print("window  external  majority")
for (w, e, _), (_, r, _) in zip(curve.points, reference.points):
    print(f"{w:>6}  {e:8.4f}  {r:8.4f}")
