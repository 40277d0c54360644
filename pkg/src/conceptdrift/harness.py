"""Prequential (test-then-train) evaluation of incremental learners on drifting streams."""

from __future__ import annotations

import math
import shlex
import subprocess
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .distribution import AttributeSchema, PosteriorTable
from .generator import CovariateSearchError, DriftSpec, Stream, generate_stream


class OnlineLearner:
    """observe(x, y) / predict(x) / reset(); predictions break ties toward class 0."""

    def __init__(self, schema: AttributeSchema):
        self.schema = schema

    def observe(self, x, y: int) -> None:
        raise NotImplementedError

    def predict(self, x) -> int:
        raise NotImplementedError

    def reset(self) -> None:
        raise NotImplementedError


def _argmax(values) -> int:
    best, best_v = 0, values[0]
    for k in range(1, len(values)):
        if values[k] > best_v:
            best, best_v = k, values[k]
    return best


class MajorityClass(OnlineLearner):
    def __init__(self, schema: AttributeSchema):
        super().__init__(schema)
        self.reset()

    def reset(self):
        self.counts = [0] * self.schema.n_classes

    def observe(self, x, y):
        self.counts[y] += 1

    def predict(self, x):
        return _argmax(self.counts)


class IncrementalNaiveBayes(OnlineLearner):
    """Count-based categorical naive Bayes with Laplace smoothing ``alpha``."""

    def __init__(self, schema: AttributeSchema, alpha: float = 1.0):
        super().__init__(schema)
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.alpha = alpha
        self.reset()

    def reset(self):
        K, A, n = self.schema.n_classes, self.schema.arity, self.schema.n_attributes
        self.class_counts = [0] * K
        # value_counts[j][v][k]: attribute j took value v with class k
        self.value_counts = [[[0] * K for _ in range(A)] for _ in range(n)]
        self.n = 0

    def observe(self, x, y):
        self.n += 1
        self.class_counts[y] += 1
        for j, v in enumerate(x):
            self.value_counts[j][v][y] += 1

    def scores(self, x) -> list[float]:
        K, A, a = self.schema.n_classes, self.schema.arity, self.alpha
        out = []
        for k in range(K):
            nk = self.class_counts[k]
            denom = nk + A * a
            s = (nk + a) / (self.n + K * a) if self.n + K * a > 0 else 1.0 / K
            for j, v in enumerate(x):
                s *= (self.value_counts[j][v][k] + a) / denom if denom > 0 else 1.0 / A
            out.append(s)
        return out

    def predict(self, x):
        return _argmax(self.scores(x))


class LookupTableClassifier(OnlineLearner):
    """Per-cell class counts; unseen cells fall back to the overall majority."""

    def __init__(self, schema: AttributeSchema):
        super().__init__(schema)
        self.reset()

    def reset(self):
        self.cell_counts: dict[int, list[int]] = {}
        self.totals = [0] * self.schema.n_classes

    @classmethod
    def from_posterior(cls, schema: AttributeSchema, posterior: PosteriorTable) -> "LookupTableClassifier":
        """A table that already predicts the most probable class of every cell."""
        clf = cls(schema)
        for cell, k in enumerate(posterior.assigned_classes):
            counts = [0] * schema.n_classes
            counts[int(k)] = 1
            clf.cell_counts[cell] = counts
        return clf

    def _cell(self, x) -> int:
        c = 0
        A = self.schema.arity
        for v in x:
            c = c * A + v
        return c

    @property
    def n_seen_cells(self) -> int:
        return len(self.cell_counts)

    def observe(self, x, y):
        cell = self._cell(x)
        counts = self.cell_counts.get(cell)
        if counts is None:
            counts = self.cell_counts[cell] = [0] * self.schema.n_classes
        counts[y] += 1
        self.totals[y] += 1

    def predict(self, x):
        counts = self.cell_counts.get(self._cell(x))
        return _argmax(counts if counts is not None else self.totals)


class ExternalLearner(OnlineLearner):
    """Learner living in another process, spoken to over stdin/stdout.

    Requests, one per line: ``P x1,...,xn`` expects a class index reply;
    ``O x1,...,xn,y`` expects any acknowledgement line.  ``reset`` restarts the
    process.
    """

    def __init__(self, schema: AttributeSchema, command: Sequence[str] | str):
        super().__init__(schema)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = None
        self.reset()

    def _start(self):
        self.proc = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def _ask(self, line: str) -> str:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        if not reply:
            raise RuntimeError(f"external learner {self.command!r} closed its output")
        return reply.strip()

    def predict(self, x):
        reply = self._ask("P " + ",".join(str(int(v)) for v in x))
        y = int(reply)
        if not 0 <= y < self.schema.n_classes:
            raise ValueError(f"external learner predicted class {y} outside the schema")
        return y

    def observe(self, x, y):
        self._ask("O " + ",".join(str(int(v)) for v in x) + f",{int(y)}")

    def reset(self):
        self.close()
        self._start()

    def close(self):
        if self.proc is not None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)
            self.proc.stdout.close()
            self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


LEARNERS: dict[str, Callable[[AttributeSchema], OnlineLearner]] = {
    "naive-bayes": IncrementalNaiveBayes,
    "lookup": LookupTableClassifier,
    "majority": MajorityClass,
}


def make_learner(name: str, schema: AttributeSchema) -> OnlineLearner:
    if name.startswith("external:"):
        return ExternalLearner(schema, name[len("external:"):])
    try:
        return LEARNERS[name](schema)
    except KeyError:
        raise ValueError(f"unknown learner {name!r}; known: {', '.join(LEARNERS)} or external:<command>") from None


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class ErrorCurve:
    window: int
    points: tuple  # (window index, mean 0-1 loss, instance count)
    replicate_count: int = 1

    @property
    def errors(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def counts(self) -> np.ndarray:
        return np.array([p[2] for p in self.points], dtype=np.int64)


def prequential_evaluate(learner: OnlineLearner, stream: Stream, window: int = 1000) -> ErrorCurve:
    """Predict each instance, score it, then learn from it; average the loss per window."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if stream.schema != learner.schema:
        raise ValueError(f"learner schema {learner.schema} does not match stream schema {stream.schema}")
    xs = stream.xs.tolist()
    ys = stream.ys.tolist()
    predict, observe = learner.predict, learner.observe
    points = []
    for w, lo in enumerate(range(0, len(ys), window)):
        hi = min(lo + window, len(ys))
        wrong = 0
        for i in range(lo, hi):
            x, y = xs[i], ys[i]
            if predict(x) != y:
                wrong += 1
            observe(x, y)
        points.append((w, wrong / (hi - lo), hi - lo))
    return ErrorCurve(window, tuple(points))


def aggregate_curves(curves: Sequence[ErrorCurve]) -> ErrorCurve:
    if not curves:
        raise ValueError("cannot aggregate an empty set of curves")
    first = curves[0]
    for c in curves[1:]:
        if c.window != first.window or len(c.points) != len(first.points):
            raise ValueError("curves disagree on window layout")
    errs = np.mean([c.errors for c in curves], axis=0)
    n = np.sum([c.counts for c in curves], axis=0)
    pts = tuple((p[0], float(e), int(k)) for p, e, k in zip(first.points, errs, n))
    return ErrorCurve(first.window, pts, sum(c.replicate_count for c in curves))


def _error_matrix(curves) -> np.ndarray:
    if len(curves) and isinstance(curves[0], ErrorCurve):
        return np.array([c.errors for c in curves])
    return np.asarray(curves, dtype=np.float64)


def win_draw_loss(errors_a, errors_b) -> list[tuple[int, int, int]]:
    """Per window: (streams where a has lower error, ties, streams where b is lower).

    Inputs are paired per replicate: lists of ErrorCurve or (replicates, windows) arrays.
    """
    a, b = _error_matrix(errors_a), _error_matrix(errors_b)
    if a.shape != b.shape:
        raise ValueError(f"paired error arrays differ in shape: {a.shape} vs {b.shape}")
    wins_a = (a < b).sum(axis=0)
    wins_b = (b < a).sum(axis=0)
    draws = (a == b).sum(axis=0)
    return [(int(x), int(d), int(y)) for x, d, y in zip(wins_a, draws, wins_b)]


def sign_test(wins: int, losses: int) -> float:
    """One-tailed sign test: P[Binomial(wins + losses, 1/2) >= max(wins, losses)].

    Summed in log space so large counts do not overflow.
    """
    if wins < 0 or losses < 0:
        raise ValueError("counts must be non-negative")
    n = wins + losses
    if n == 0:
        return 1.0
    k0 = max(wins, losses)
    log_terms = [math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) for k in range(k0, n + 1)]
    top = max(log_terms)
    log_p = top + math.log(math.fsum(math.exp(t - top) for t in log_terms)) - n * math.log(2.0)
    return min(1.0, math.exp(log_p))


@dataclass(frozen=True)
class MagnitudeResponse:
    magnitude: float
    jump: float
    recovery_windows: int | None
    baseline: float


@dataclass(frozen=True)
class OrderingReport:
    responses: tuple
    jump_increasing: bool
    recovery_nondecreasing: bool
    epsilon: float


def response_ordering(curves_by_magnitude: Mapping[float, ErrorCurve], drift_window: int, epsilon: float = 0.02) -> OrderingReport:
    """Jump at the first post-drift window and windows needed to settle back.

    The baseline is the error in the last window before ``drift_window``.  The
    recovery time is the number of windows from ``drift_window`` until the
    error drops to baseline + epsilon and stays there; ``None`` if it never does.
    """
    if drift_window < 1:
        raise ValueError("drift_window must leave at least one pre-drift window")
    responses = []
    for mag in sorted(curves_by_magnitude):
        e = curves_by_magnitude[mag].errors
        if drift_window >= e.size:
            raise ValueError("drift window beyond the end of the curve")
        base = float(e[drift_window - 1])
        jump = float(e[drift_window] - base)
        settled = e[drift_window:] <= base + epsilon
        recovery = None
        # first index after which every window is settled
        bad = np.flatnonzero(~settled)
        if bad.size == 0:
            recovery = 0
        elif bad[-1] + 1 < settled.size:
            recovery = int(bad[-1] + 1)
        responses.append(MagnitudeResponse(float(mag), jump, recovery, base))
    jumps = [r.jump for r in responses]
    recov = [r.recovery_windows for r in responses]
    rec_ok = all(r is not None for r in recov) and all(x <= y for x, y in zip(recov, recov[1:]))
    return OrderingReport(
        tuple(responses),
        all(x < y for x, y in zip(jumps, jumps[1:])),
        rec_ok,
        epsilon,
    )


# --------------------------------------------------------------------------
# experiment driver


@dataclass(frozen=True)
class ReplicateResult:
    magnitude: float
    replicate: int
    achieved_magnitude: float
    curves: dict = field(default_factory=dict)  # learner name -> ErrorCurve
    seen_cells_at_drift: dict = field(default_factory=dict)
    error: str | None = None


def run_replicate(spec: DriftSpec, replicate: int, learners: Sequence[str], window: int) -> ReplicateResult:
    """One stream, every learner.  A failed covariate search is recorded, not raised."""
    try:
        stream, truth = generate_stream(spec, replicate)
    except CovariateSearchError as exc:
        return ReplicateResult(spec.target_magnitude, replicate, float("nan"), error=str(exc))
    curves = {}
    seen = {}
    for name in learners:
        learner = make_learner(name, spec.schema)
        try:
            pre = prequential_evaluate(learner, stream[: spec.drift_time], window)
            if isinstance(learner, LookupTableClassifier):
                seen[name] = learner.n_seen_cells
            post = prequential_evaluate(learner, stream[spec.drift_time:], window)
        finally:
            if isinstance(learner, ExternalLearner):
                learner.close()
        offset = len(pre.points)
        pts = pre.points + tuple((p[0] + offset, p[1], p[2]) for p in post.points)
        curves[name] = ErrorCurve(window, pts)
    return ReplicateResult(spec.target_magnitude, replicate, truth.achieved_magnitude, curves, seen)


def _run_job(args):
    return run_replicate(*args)


def run_experiment(
    base: DriftSpec,
    magnitudes: Sequence[float],
    learners: Sequence[str],
    window: int = 1000,
    workers: int = 1,
) -> dict[float, list[ReplicateResult]]:
    """All (magnitude, replicate) runs; results ordered the same whatever ``workers`` is."""
    if base.drift_time % window:
        raise ValueError("drift_time must be a multiple of the window so the drift starts a window")
    jobs = [
        (replace(base, target_magnitude=float(m)), r, tuple(learners), window)
        for m in magnitudes
        for r in range(base.replicate_count)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    out: dict[float, list[ReplicateResult]] = {float(m): [] for m in magnitudes}
    for res in results:
        out[res.magnitude].append(res)
    return out


def echo_learner_main(stdin=None, stdout=None) -> int:
    """Trivial external learner: always predicts class 0 and acknowledges observations."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        if line.startswith("P "):
            stdout.write("0\n")
        elif line.startswith("O "):
            stdout.write("OK\n")
        else:
            stdout.write("ERR unknown request\n")
        stdout.flush()
    return 0
