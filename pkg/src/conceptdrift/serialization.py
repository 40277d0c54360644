"""Plain-text formats for concepts, trajectory manifests and streams.

Concept block::

    begin concept <name>
    n_attributes = 2
    arity = 3
    n_classes = 3
    covariates = factored            # or: explicit
    attribute 0 = p0 p1 p2
    ...
    cell 0 = p                       # explicit covariates only
    row 0 = q0 q1 q2
    ...
    end concept

Probabilities are written with 17 significant digits, which round-trips every
IEEE double exactly.

A trajectory manifest is a sequence of concept blocks followed by::

    begin trajectory
    segment = <start> <end> constant <concept>
    segment = <start> <end> mixture <concept_a> <concept_b> t:w t:w ...
    segment = <start> <end> interpolation <concept_a> <concept_b> t:cell t:cell ...
    end trajectory

Stream files hold ``# key = value`` header lines and then one record per
line: ``step,x_1,...,x_n,y``.
"""

from __future__ import annotations

from typing import Iterable, TextIO

import numpy as np

from .distribution import (
    AttributeSchema,
    ConceptTrajectory,
    Constant,
    CovariateDistribution,
    JointConcept,
    Mixture,
    PosteriorInterpolation,
    PosteriorTable,
    TrajectorySegment,
)


def fmt_float(v: float) -> str:
    return format(float(v), ".16e")


def _fmt_time(v: float) -> str:
    return repr(float(v))


def dumps_concept(concept: JointConcept, name: str = "concept") -> str:
    if not name or any(ch.isspace() for ch in name):
        raise ValueError(f"concept name {name!r} must be a non-empty token")
    s = concept.schema
    cov = concept.covariates
    lines = [
        f"begin concept {name}",
        f"n_attributes = {s.n_attributes}",
        f"arity = {s.arity}",
        f"n_classes = {s.n_classes}",
        f"covariates = {'factored' if cov.is_factored else 'explicit'}",
    ]
    for j, v in enumerate(cov.per_attribute):
        lines.append(f"attribute {j} = " + " ".join(fmt_float(p) for p in v))
    if not cov.is_factored:
        for c, p in enumerate(cov.cell_probs):
            lines.append(f"cell {c} = {fmt_float(p)}")
    for c, row in enumerate(concept.posterior.rows):
        lines.append(f"row {c} = " + " ".join(fmt_float(p) for p in row))
    lines.append("end concept")
    return "\n".join(lines) + "\n"


def _parse_block(lines: list[str], i: int) -> tuple[str, JointConcept, int]:
    head = lines[i].split()
    if len(head) != 3 or head[:2] != ["begin", "concept"]:
        raise ValueError(f"line {i + 1}: expected 'begin concept <name>'")
    name = head[2]
    header = {}
    attrs, cells, rows = {}, {}, {}
    i += 1
    while i < len(lines) and lines[i].strip() != "end concept":
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        parts = key.split()
        if len(parts) == 2 and parts[0] in ("attribute", "cell", "row"):
            target = {"attribute": attrs, "cell": cells, "row": rows}[parts[0]]
            target[int(parts[1])] = [float(x) for x in val.split()]
        elif key in ("n_attributes", "arity", "n_classes", "covariates"):
            header[key] = val
        else:
            raise ValueError(f"line {i}: unknown concept key {key!r}")
    if i >= len(lines):
        raise ValueError(f"concept {name!r} is not terminated by 'end concept'")
    schema = AttributeSchema(int(header["n_attributes"]), int(header["arity"]), int(header["n_classes"]))
    per_attribute = tuple(np.array(attrs[j]) for j in range(schema.n_attributes))
    explicit = None
    if header.get("covariates", "factored") == "explicit":
        explicit = np.array([cells[c][0] for c in range(schema.cell_count)])
    cov = CovariateDistribution(per_attribute, explicit)
    post = PosteriorTable(np.array([rows[c] for c in range(schema.cell_count)]))
    return name, JointConcept(schema, cov, post), i + 1


def loads_concept(text: str) -> JointConcept:
    lines = [ln for ln in text.splitlines()]
    start = next(k for k, ln in enumerate(lines) if ln.strip())
    _, concept, _ = _parse_block(lines, start)
    return concept


def dumps_trajectory(trajectory: ConceptTrajectory, header: dict | None = None) -> str:
    names: dict[int, str] = {}
    blocks = []

    def ref(c: JointConcept) -> str:
        if id(c) not in names:
            names[id(c)] = f"c{len(names)}"
            blocks.append(dumps_concept(c, names[id(c)]))
        return names[id(c)]

    seg_lines = []
    for seg in trajectory.segments:
        law = seg.law
        span = f"{_fmt_time(seg.start)} {_fmt_time(seg.end)}"
        if isinstance(law, Constant):
            seg_lines.append(f"segment = {span} constant {ref(law.concept)}")
        elif isinstance(law, Mixture):
            pts = " ".join(f"{_fmt_time(t)}:{_fmt_time(w)}" for t, w in law.breakpoints)
            seg_lines.append(f"segment = {span} mixture {ref(law.a)} {ref(law.b)} {pts}")
        elif isinstance(law, PosteriorInterpolation):
            pts = " ".join(f"{_fmt_time(t)}:{c}" for t, c in law.schedule)
            seg_lines.append(f"segment = {span} interpolation {ref(law.a)} {ref(law.b)} {pts}".rstrip())
        else:
            raise TypeError(f"cannot serialise law {type(law).__name__}")
    out = ["# conceptdrift trajectory v1"]
    for k, v in (header or {}).items():
        out.append(f"# {k} = {v}")
    text = "\n".join(out) + "\n" + "".join(blocks)
    return text + "begin trajectory\n" + "".join(ln + "\n" for ln in seg_lines) + "end trajectory\n"


def loads_trajectory(text: str) -> ConceptTrajectory:
    lines = text.splitlines()
    concepts: dict[str, JointConcept] = {}
    segments = []
    i = 0
    in_traj = False
    while i < len(lines):
        line = lines[i].strip()
        if not line or line.startswith("#"):
            i += 1
            continue
        if line.startswith("begin concept"):
            name, c, i = _parse_block(lines, i)
            concepts[name] = c
            continue
        if line == "begin trajectory":
            in_traj = True
        elif line == "end trajectory":
            in_traj = False
        elif in_traj and line.startswith("segment"):
            _, _, body = line.partition("=")
            parts = body.split()
            start, end, kind = float(parts[0]), float(parts[1]), parts[2]
            if kind == "constant":
                law = Constant(concepts[parts[3]])
            elif kind == "mixture":
                bps = tuple(tuple(float(x) for x in p.split(":")) for p in parts[5:])
                law = Mixture(concepts[parts[3]], concepts[parts[4]], bps)
            elif kind == "interpolation":
                sched = tuple((float(p.split(":")[0]), int(p.split(":")[1])) for p in parts[5:])
                law = PosteriorInterpolation(concepts[parts[3]], concepts[parts[4]], sched)
            else:
                raise ValueError(f"line {i + 1}: unknown law {kind!r}")
            segments.append(TrajectorySegment(start, end, law))
        else:
            raise ValueError(f"line {i + 1}: unexpected content {line!r}")
        i += 1
    if not segments:
        raise ValueError("no trajectory segments found")
    return ConceptTrajectory(tuple(segments))


def read_header(lines: Iterable[str]) -> dict[str, str]:
    out = {}
    for line in lines:
        if not line.startswith("#"):
            break
        key, sep, val = line[1:].partition("=")
        if sep:
            out[key.strip()] = val.strip()
    return out


def write_stream(fh: TextIO, xs: np.ndarray, ys: np.ndarray, header: dict, first_step: int = 1):
    fh.write("# conceptdrift stream v1\n")
    for k, v in header.items():
        fh.write(f"# {k} = {v}\n")
    steps = np.arange(first_step, first_step + ys.shape[0])
    table = np.column_stack([steps, xs, ys])
    # one formatted block per chunk keeps writing 10^5 lines fast
    for lo in range(0, table.shape[0], 50_000):
        chunk = table[lo:lo + 50_000]
        fh.write("\n".join(",".join(map(str, r)) for r in chunk.tolist()))
        fh.write("\n")


def read_stream(fh: TextIO) -> tuple[dict, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (header, steps, xs, ys)."""
    header = {}
    body = []
    for line in fh:
        if line.startswith("#"):
            key, sep, val = line[1:].partition("=")
            if sep:
                header[key.strip()] = val.strip()
            continue
        if line.strip():
            body.append(line)
    if not body:
        return header, np.empty(0, dtype=np.int64), np.empty((0, 0), dtype=np.int64), np.empty(0, dtype=np.int64)
    table = np.loadtxt(body, delimiter=",", dtype=np.int64, ndmin=2)
    return header, table[:, 0], table[:, 1:-1], table[:, -1]
