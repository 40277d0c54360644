"""Command-line front end: generate, measure, classify, evaluate, report, defaults.

Every file written carries the config hash and master seed in its header, and
no output depends on wall-clock time, so two runs with the same hash produce
the same bytes.  Exit status: 0 on success, 1 when some sub-operation failed
(outputs are then flagged ``status = partial`` and a ``PARTIAL`` file lists
the failures), 2 for invalid input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import typing
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .distribution import AttributeSchema, ConceptTrajectory
from .generator import (
    CovariateSearchError,
    DriftKind,
    DriftSpec,
    build_fixture_trajectory,
    fixture_params,
    generate_stream,
)
from .harness import aggregate_curves, response_ordering, run_experiment, sign_test, win_draw_loss
from .measures import DistanceFunction, format_measure_record, measure, MEASURE_COLUMNS
from .serialization import dumps_trajectory, loads_trajectory, write_stream
from .taxonomy import TaxonomyParams, classify_trajectory

_TAXONOMY_KEYS = tuple(f.name for f in fields(TaxonomyParams))
# keys that change where or how fast results are produced, never what they are
_UNHASHED = ("output_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "class"
    magnitudes: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    replicates: int = 20
    seed: int = 0
    drift_time: int = 10_000
    length: int = 30_000
    n_attributes: int = 5
    arity: int = 3
    n_classes: int = 3
    covariate_distance: str = "hellinger-covariate"
    covariate_tol: float = 1e-3
    max_restarts: int = 20
    distance: str = "hellinger-joint"
    grid_n: int = 1024
    learners: tuple[str, ...] = ("naive-bayes", "lookup", "majority")
    window: int = 1000
    recovery_epsilon: float = 0.02
    phi: float = 1.0
    delta: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    nu: float = 1.0
    mu: float = 0.1
    eps_zero: float = 1e-9
    cycle_i: int = 0
    cycle_m: float = 0.0
    eps_time: float = 0.0
    output_dir: str = "run"
    workers: int = 1

    def __post_init__(self):
        DriftKind(self.kind)
        DistanceFunction.parse(self.distance)
        DistanceFunction.parse(self.covariate_distance)
        for m in self.magnitudes:
            if not 0.0 <= m <= 1.0:
                raise ValueError(f"target magnitude {m} outside [0, 1]")
        if not self.magnitudes:
            raise ValueError("magnitudes must not be empty")
        if self.replicates < 1 or self.window < 1 or self.workers < 1 or self.grid_n < 1:
            raise ValueError("replicates, window, workers and grid_n must be >= 1")
        self.drift_spec(self.magnitudes[0])
        self.taxonomy_params()

    # -- conversions ---------------------------------------------------
    @property
    def schema(self) -> AttributeSchema:
        return AttributeSchema(self.n_attributes, self.arity, self.n_classes)

    def drift_spec(self, magnitude: float) -> DriftSpec:
        return DriftSpec(
            kind=DriftKind(self.kind),
            target_magnitude=float(magnitude),
            drift_time=self.drift_time,
            length=self.length,
            schema=self.schema,
            seed=self.seed,
            replicate_count=self.replicates,
            covariate_distance=DistanceFunction.parse(self.covariate_distance),
            covariate_tol=self.covariate_tol,
            max_restarts=self.max_restarts,
        )

    def taxonomy_params(self) -> TaxonomyParams:
        return TaxonomyParams(**{k: getattr(self, k) for k in _TAXONOMY_KEYS})

    # -- text form -----------------------------------------------------
    @staticmethod
    def _format(value) -> str:
        if isinstance(value, tuple):
            return ",".join(ExperimentConfig._format(v) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    @classmethod
    def _convert(cls, key: str, text: str):
        hint = typing.get_type_hints(cls)[key]
        if typing.get_origin(hint) is tuple:
            (elem, _) = typing.get_args(hint)
            return tuple(elem(p.strip()) for p in text.split(",") if p.strip())
        return hint(text.strip())

    def to_text(self, include_unhashed: bool = True) -> str:
        return "".join(
            f"{k} = {self._format(v)}\n"
            for k, v in asdict(self).items()
            if include_unhashed or k not in _UNHASHED
        )

    @classmethod
    def parse_overrides(cls, text: str) -> dict:
        known = {f.name for f in fields(cls)}
        out = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep:
                raise ValueError(f"config line {lineno}: expected key = value")
            if key not in known:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            out[key] = cls._convert(key, val)
        return out

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls(**cls.parse_overrides(text))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text(include_unhashed=False).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# helpers


class PartialRun(Exception):
    """Raised after outputs were written but some sub-operation failed."""


def _header(cfg: ExperimentConfig, extra: dict | None = None, config_hash: str | None = None) -> dict:
    h = {"config_hash": config_hash or cfg.config_hash, "seed": cfg.seed, "version": __version__}
    h.update(extra or {})
    return h


def _header_text(header: dict) -> str:
    return "".join(f"# {k} = {v}\n" for k, v in header.items())


def _load_trajectory(source: str) -> tuple[ConceptTrajectory, str]:
    """A manifest path or ``fixture:NAME``; also returns a digest of the source."""
    if source.startswith("fixture:"):
        name = source[len("fixture:"):]
        traj = build_fixture_trajectory(name)
        return traj, hashlib.sha256(source.encode()).hexdigest()
    text = Path(source).read_text()
    return loads_trajectory(text), hashlib.sha256(text.encode()).hexdigest()


def _derived_hash(cfg: ExperimentConfig, *parts: str) -> str:
    h = hashlib.sha256(cfg.to_text(include_unhashed=False).encode())
    for p in parts:
        h.update(b"\0" + p.encode())
    return h.hexdigest()[:16]


def _mag_tag(m: float) -> str:
    return f"{m:.4f}"


def _write_partial(out: Path, failures: list[str]):
    marker = out / "PARTIAL"
    if failures:
        marker.write_text("".join(f + "\n" for f in failures))
    elif marker.exists():
        marker.unlink()


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    written = []
    for m in cfg.magnitudes:
        spec = cfg.drift_spec(m)
        for r in range(cfg.replicates):
            stem = f"{cfg.kind}-m{_mag_tag(m)}-r{r:03d}"
            try:
                stream, truth = generate_stream(spec, r)
            except CovariateSearchError as exc:
                failures.append(f"{stem}: {exc}")
                continue
            header = _header(
                cfg,
                {
                    "kind": cfg.kind,
                    "replicate": r,
                    "target_magnitude": repr(float(m)),
                    "achieved_magnitude": repr(float(truth.achieved_magnitude)),
                    "k_flipped": truth.k_flipped,
                    "search_iterations": truth.search_iterations,
                    "restarts": truth.restarts,
                    "drift_time": cfg.drift_time,
                    "length": cfg.length,
                    "schema": f"{cfg.n_attributes},{cfg.arity},{cfg.n_classes}",
                },
            )
            with open(out / f"stream-{stem}.csv", "w", newline="\n") as fh:
                write_stream(fh, stream.xs, stream.ys, header, stream.first_step)
            (out / f"truth-{stem}.traj").write_text(dumps_trajectory(truth.trajectory, header))
            written.append(stem)
    (out / "config.txt").write_text(_header_text(_header(cfg)) + cfg.to_text(include_unhashed=False))
    _write_partial(out, failures)
    if failures:
        raise PartialRun(f"{len(failures)} of {len(failures) + len(written)} streams failed; see {out / 'PARTIAL'}")
    return out


def cmd_measure(cfg: ExperimentConfig, source: str, t: float, u: float, stream_id: str | None = None) -> str:
    traj, digest = _load_trajectory(source)
    D = DistanceFunction.parse(cfg.distance)
    m = measure(traj, t, u, D, cfg.grid_n)
    h = _derived_hash(cfg, "measure", digest, repr(t), repr(u))
    text = _header_text(_header(cfg, {"source_sha256": digest}, config_hash=h))
    text += "\t".join(MEASURE_COLUMNS) + "\n"
    return text + format_measure_record(stream_id or source, t, u, D, m) + "\n"


def cmd_classify(cfg: ExperimentConfig, source: str, params: TaxonomyParams) -> str:
    traj, digest = _load_trajectory(source)
    D = DistanceFunction.parse(cfg.distance)
    report = classify_trajectory(traj, D, params, cfg.grid_n)
    h = _derived_hash(cfg, "classify", digest, params.to_text())
    head = {"record": "header", "config_hash": h, "seed": cfg.seed, "source_sha256": digest, "version": __version__}
    return json.dumps(head, sort_keys=True) + "\n" + report.to_jsonl()


CURVE_COLUMNS = ("learner", "magnitude", "replicate", "window", "error", "n")


def cmd_evaluate(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.drift_time % cfg.window:
        raise ValueError("drift_time must be a multiple of window")
    results = run_experiment(cfg.drift_spec(cfg.magnitudes[0]), cfg.magnitudes, cfg.learners, cfg.window, cfg.workers)
    failures = [
        f"{cfg.kind}-m{_mag_tag(m)}-r{res.replicate:03d}: {res.error}"
        for m, rs in results.items()
        for res in rs
        if res.error
    ]
    ok = {m: [r for r in rs if r.error is None] for m, rs in results.items()}
    # paired comparisons need the same replicates under every magnitude
    common = sorted(set.intersection(*(set(r.replicate for r in rs) for rs in ok.values())))
    status = "partial" if failures else "complete"
    head = _header(cfg, {"kind": cfg.kind, "status": status})
    drift_window = cfg.drift_time // cfg.window

    lines = ["\t".join(CURVE_COLUMNS)]
    for name in cfg.learners:
        for m, rs in ok.items():
            for res in rs:
                for w, e, n in res.curves[name].points:
                    lines.append(f"{name}\t{m!r}\t{res.replicate}\t{w}\t{e!r}\t{n}")
    (out / "curves.tsv").write_text(_header_text(head) + "\n".join(lines) + "\n")

    ord_lines = ["learner\tmagnitude\tjump\trecovery_windows\tbaseline\tjump_increasing\trecovery_nondecreasing"]
    wdl_lines = ["learner\tmagnitude_a\tmagnitude_b\twindow\twins_a\tdraws\twins_b\tp_value"]
    for name in cfg.learners:
        agg = {m: aggregate_curves([r.curves[name] for r in rs]) for m, rs in ok.items() if rs}
        if len(agg) == len(ok):
            rep = response_ordering(agg, drift_window, cfg.recovery_epsilon)
            for r in rep.responses:
                rec = "never" if r.recovery_windows is None else r.recovery_windows
                ord_lines.append(
                    f"{name}\t{r.magnitude!r}\t{r.jump!r}\t{rec}\t{r.baseline!r}\t{rep.jump_increasing}\t{rep.recovery_nondecreasing}"
                )
        mags = sorted(ok)
        for i, ma in enumerate(mags):
            for mb in mags[i + 1:]:
                a = [r.curves[name] for r in ok[ma] if r.replicate in common]
                b = [r.curves[name] for r in ok[mb] if r.replicate in common]
                if not a:
                    continue
                for w, (wa, d, wb) in enumerate(win_draw_loss(a, b)):
                    wdl_lines.append(f"{name}\t{ma!r}\t{mb!r}\t{w}\t{wa}\t{d}\t{wb}\t{sign_test(wa, wb)!r}")
    eps_note = {"recovery_epsilon": repr(cfg.recovery_epsilon), "recovery_definition": "first post-drift window after which error stays <= baseline + epsilon"}
    (out / "ordering.tsv").write_text(_header_text({**head, **eps_note}) + "\n".join(ord_lines) + "\n")
    (out / "wdl.tsv").write_text(_header_text(head) + "\n".join(wdl_lines) + "\n")
    (out / "config.txt").write_text(_header_text(_header(cfg)) + cfg.to_text(include_unhashed=False))
    _write_partial(out, failures)
    if failures:
        raise PartialRun(f"{len(failures)} replicate(s) failed; see {out / 'PARTIAL'}")
    return out


def _read_table(path: Path) -> tuple[dict, list[dict]]:
    header, rows, cols = {}, [], None
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            k, sep, v = line[1:].partition("=")
            if sep:
                header[k.strip()] = v.strip()
        elif line:
            parts = line.split("\t")
            if cols is None:
                cols = parts
            else:
                rows.append(dict(zip(cols, parts)))
    return header, rows


def cmd_report(run_dir: str) -> Path:
    out = Path(run_dir)
    curves_path = out / "curves.tsv"
    if not out.is_dir() or not curves_path.exists():
        raise FileNotFoundError(f"{run_dir} holds no evaluation results (curves.tsv missing)")
    raw = curves_path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    header, rows = _read_table(curves_path)
    if not rows:
        raise ValueError(f"{curves_path} has no records")
    groups: dict[tuple, dict[int, list[float]]] = {}
    for r in rows:
        key = (r["learner"], float(r["magnitude"]))
        groups.setdefault(key, {}).setdefault(int(r["window"]), []).append(float(r["error"]))
    head = {
        "config_hash": header.get("config_hash", "?"),
        "seed": header.get("seed", "?"),
        "status": header.get("status", "?"),
        "source": "curves.tsv",
        "source_sha256": digest,
    }
    table = ["learner\tmagnitude\twindow\tmean_error\tstd_error\treplicates"]
    for (name, m), by_w in sorted(groups.items()):
        for w in sorted(by_w):
            e = np.array(by_w[w])
            se = float(e.std(ddof=1) / np.sqrt(e.size)) if e.size > 1 else 0.0
            table.append(f"{name}\t{m!r}\t{w}\t{float(e.mean())!r}\t{se!r}\t{e.size}")
    (out / "plot_curves.tsv").write_text(_header_text(head) + "\n".join(table) + "\n")

    summary = [f"conceptdrift {__version__} run summary", ""]
    summary += [f"{k}: {v}" for k, v in head.items()]
    ordering_path = out / "ordering.tsv"
    orderings = _read_table(ordering_path)[1] if ordering_path.exists() else []
    for name in sorted({k[0] for k in groups}):
        summary += ["", f"== stream family: kind={header.get('kind', '?')} learner={name} =="]
        summary.append("magnitude  pre-drift  jump      recovery(windows)")
        for o in (o for o in orderings if o["learner"] == name):
            summary.append(
                f"{float(o['magnitude']):<10.4f} {float(o['baseline']):<10.4f} {float(o['jump']):<+9.4f} {o['recovery_windows']}"
            )
        flags = [o for o in orderings if o["learner"] == name]
        if flags:
            summary.append(f"jump increasing in magnitude: {flags[0]['jump_increasing']}")
            summary.append(f"recovery non-decreasing in magnitude: {flags[0]['recovery_nondecreasing']}")
    if (out / "PARTIAL").exists():
        summary += ["", "PARTIAL RUN: some replicates failed:"] + (out / "PARTIAL").read_text().splitlines()
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return out


# --------------------------------------------------------------------------
# argument handling


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file; flags override it")
    for f in fields(ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="VALUE")


def _config_from_args(args) -> tuple[ExperimentConfig, dict]:
    values = {}
    if args.config:
        values.update(ExperimentConfig.parse_overrides(Path(args.config).read_text()))
    flags = {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name)
        if v is not None:
            flags[f.name] = ExperimentConfig._convert(f.name, v)
    values.update(flags)
    return ExperimentConfig(**values), {**values}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conceptdrift", description="Concept drift measurement, taxonomy and benchmark streams.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write stream files and ground-truth manifests")
    _add_config_flags(p)

    p = sub.add_parser("measure", help="drift measures of a trajectory between t and u")
    p.add_argument("trajectory", help="manifest path or fixture:NAME")
    p.add_argument("t", type=float)
    p.add_argument("u", type=float)
    p.add_argument("--stream-id")
    p.add_argument("--output")
    _add_config_flags(p)

    p = sub.add_parser("classify", help="taxonomy report of a trajectory")
    p.add_argument("trajectory", help="manifest path or fixture:NAME")
    p.add_argument("--params", help="taxonomy parameter file (key = value)")
    p.add_argument("--output")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="prequential evaluation over a magnitude grid")
    _add_config_flags(p)

    p = sub.add_parser("report", help="summary and plot-ready tables for an evaluate run")
    p.add_argument("run_dir")

    sub.add_parser("defaults", help="print every config key with its default")
    return parser


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "defaults":
            sys.stdout.write(ExperimentConfig().to_text())
            return 0
        if args.command == "report":
            print(cmd_report(args.run_dir) / "summary.txt")
            return 0
        cfg, given = _config_from_args(args)
        if args.command == "generate":
            print(cmd_generate(cfg))
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg))
        elif args.command == "measure":
            _emit(cmd_measure(cfg, args.trajectory, args.t, args.u, args.stream_id), args.output)
        elif args.command == "classify":
            if args.params:
                base = TaxonomyParams.from_text(Path(args.params).read_text())
            elif args.trajectory.startswith("fixture:"):
                base = fixture_params(args.trajectory[len("fixture:"):])
            else:
                base = cfg.taxonomy_params()
            params = replace(base, **{k: v for k, v in given.items() if k in _TAXONOMY_KEYS})
            _emit(cmd_classify(cfg, args.trajectory, params), args.output)
    except PartialRun as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
