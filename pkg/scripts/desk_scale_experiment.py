#!/usr/bin/env python3
"""Desk-scale benchmark: class and covariate drift over the default magnitude grid.

Runs ``evaluate`` then ``report`` for each drift kind and prints the
summaries.  20 replicates x 30,000 steps with the drift at step 10,000.

    python3 scripts/desk_scale_experiment.py --out runs --workers 4
"""

import argparse
import sys
from pathlib import Path

from conceptdrift.cli import main


def run(out: Path, workers: int, seed: int) -> int:
    status = 0
    for kind, mags in (("class", "0,0.25,0.5,0.75,1"), ("covariate", "0,0.1,0.3,0.5")):
        run_dir = out / kind
        rc = main([
            "evaluate", "--kind", kind, "--magnitudes", mags, "--seed", str(seed),
            "--workers", str(workers), "--output-dir", str(run_dir),
        ])
        status = max(status, rc)
        if (run_dir / "curves.tsv").exists():
            main(["report", str(run_dir)])
            print((run_dir / "summary.txt").read_text())
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    sys.exit(run(a.out, a.workers, a.seed))
