"""Command line entry point: ``run``, ``sweep`` and ``stats``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
import multiprocessing
import os
import sys
from pathlib import Path
from typing import Iterable, Sequence

from . import stats
from .config import ConfigError, ExperimentConfig, dump_config, from_dict, load_config
from .simloop import RunRecord, run

log = logging.getLogger("trustplan")

OUT_ENV = "TRUSTPLAN_OUT"
RESULTS_SCHEMA_VERSION = 1
RECORD_FIELDS = tuple(f.name for f in dataclasses.fields(RunRecord))
RESULT_COLUMNS = RECORD_FIELDS + ("config",)


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "trustplan_out"))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.6f}"
    return str(v)


# --- results table -------------------------------------------------------

def read_results(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class ResultsWriter:
    """Single appending writer; creates the versioned header on first use."""

    def __init__(self, path: Path):
        self.path = path
        fresh = not path.exists() or path.stat().st_size == 0
        self.fh = path.open("a", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        if fresh:
            self.fh.write(f"# schema_version: {RESULTS_SCHEMA_VERSION}\n")
            self.writer.writerow(RESULT_COLUMNS)
            self.fh.flush()

    def write(self, row: dict) -> None:
        self.writer.writerow([_fmt(row[c]) if c != "config" else row[c] for c in RESULT_COLUMNS])
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


# --- run -------------------------------------------------------------------

def _config_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))


def execute(cfg_dict: dict, trace_dir: str | None) -> dict:
    """Run one configuration given as a plain dict; never raises."""
    try:
        cfg = from_dict(ExperimentConfig, cfg_dict)
    except (ConfigError, ValueError) as exc:
        return _aborted_row(cfg_dict, f"invalid config: {exc}")
    trace = None if trace_dir is None else Path(trace_dir) / f"trace_{cfg.config_hash()}.csv"
    try:
        record = run(cfg, trace)
    except Exception as exc:  # contract violations outside the loop, e.g. unknown scenario
        return _aborted_row(cfg_dict, f"{type(exc).__name__}: {exc}", cfg)
    row = record.as_dict()
    row["config"] = _config_json(cfg)
    return row


def _aborted_row(cfg_dict: dict, error: str, cfg: ExperimentConfig | None = None) -> dict:
    blob = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":"), default=str)
    chash = cfg.config_hash() if cfg is not None else hashlib.sha256(blob.encode()).hexdigest()[:16]
    row = {f: "" for f in RECORD_FIELDS}
    row.update(
        scenario=cfg_dict.get("scenario", ""), mode=cfg_dict.get("mode", ""),
        noise=cfg_dict.get("noise", ""), trustmhe=cfg_dict.get("trustmhe", ""),
        t_est=cfg_dict.get("t_est", ""), seed=cfg_dict.get("seed", ""), config_hash=chash,
        crashes=0, progress=0.0, success=False, min_dist=math.inf, sim_time=0.0, wall_time=0.0,
        aborted=True, error=error, config=_config_json(cfg) if cfg is not None else blob,
    )
    return row


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.set, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else default_out()
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    try:
        record = run(cfg, out / "trace.csv")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    row = record.as_dict()
    (out / "record.json").write_text(json.dumps(row, indent=2, sort_keys=True) + "\n")
    print(" ".join(f"{k}={_fmt(row[k])}" for k in
                   ("scenario", "mode", "seed", "crashes", "progress", "success", "min_dist", "sim_time")))
    if record.aborted:
        print(f"aborted: {record.error}", file=sys.stderr)
        return 1
    return 0


# --- sweep -----------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class SweepSpec:
    scenarios: tuple[str, ...]
    modes: tuple[str, ...]
    noises: tuple[float, ...]
    horizons: tuple[int | None, ...]  # None is the TrustMHE-off arm
    seeds: tuple[int, ...]

    def __post_init__(self):
        for name in ("scenarios", "modes", "noises", "horizons", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"sweep axis {name} is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("sweep seeds must be distinct")

    def configs(self, base: dict) -> list[dict]:
        out = []
        for sc, mode, noise, h, seed in itertools.product(
                self.scenarios, self.modes, self.noises, self.horizons, self.seeds):
            d = json.loads(json.dumps(base))
            d.update(scenario=sc, mode=mode, noise=noise, seed=seed, trustmhe=h is not None)
            if h is not None:
                d["t_est"] = h
            out.append(d)
        return out


def _hash_of(cfg_dict: dict) -> str:
    try:
        return from_dict(ExperimentConfig, cfg_dict).config_hash()
    except (ConfigError, ValueError):
        return _aborted_row(cfg_dict, "")["config_hash"]


def run_sweep(configs: Sequence[dict], out: Path, jobs: int = 1) -> int:
    """Execute configs not yet in ``out/results.csv``; returns the number run."""
    out.mkdir(parents=True, exist_ok=True)
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    results = out / "results.csv"
    done = {r["config_hash"] for r in read_results(results)}
    todo = []
    seen = set(done)
    for c in configs:
        h = _hash_of(c)
        if h not in seen:
            seen.add(h)
            todo.append(c)
    writer = ResultsWriter(results)
    try:
        if jobs > 1 and len(todo) > 1:
            with multiprocessing.get_context("spawn").Pool(jobs) as pool:
                for row in pool.imap(_execute_star, [(c, str(traces)) for c in todo]):
                    writer.write(row)
        else:
            for c in todo:
                writer.write(execute(c, str(traces)))
    finally:
        writer.close()
    return len(todo)


def _execute_star(args):
    return execute(*args)


def _parse_list(text: str, conv) -> tuple:
    items = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if conv is int and "-" in part[1:]:
            lo, hi = part.split("-", 1)
            items.extend(range(int(lo), int(hi) + 1))
        else:
            items.append(conv(part))
    return tuple(items)


def _horizon(text: str):
    return None if text.lower() in ("off", "none", "disabled") else int(text)


def cmd_sweep(args) -> int:
    try:
        base = load_config(args.config, args.set).to_dict()
        spec = SweepSpec(_parse_list(args.scenarios, str), _parse_list(args.modes, str),
                         _parse_list(args.noises, float), _parse_list(args.t_est, _horizon),
                         _parse_list(args.seeds, int))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else default_out()
    configs = spec.configs(base)
    n = run_sweep(configs, out, args.jobs)
    print(f"matrix={len(configs)} executed={n} skipped={len(configs) - n} results={out / 'results.csv'}")
    return 0


# --- stats -----------------------------------------------------------------

def write_report(report: stats.Report, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with (out / "report.csv").open("w", newline="") as fh:
        fh.write(f"# schema_version: {RESULTS_SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("group", "metric", "arm", "runs", "mean", "median", "std", "min", "max"))
        for s in report.summaries:
            w.writerow((s.group, s.metric, s.arm, s.runs, *(_fmt(x) for x in
                        (s.mean, s.median, s.std, s.min, s.max))))
        w.writerow(())
        w.writerow(("group", "metric", "test", "statistic", "p", "note"))
        for t in report.tests:
            w.writerow((t.group, t.metric, t.test, _fmt(t.statistic), _fmt(t.p), t.note))
    doc = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "aborted_runs": report.aborted,
        "summaries": [dataclasses.asdict(s) for s in report.summaries],
        "tests": [dataclasses.asdict(t) for t in report.tests],
    }
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_num) + "\n")


def _json_num(v):
    return float(v)


def write_plot_data(records: list[dict], group_by: str | None, out: Path) -> list[Path]:
    """Box-plot quantiles per facet and arm, one file per metric."""
    live = [r for r in records if not stats._truthy(r.get("aborted", False))]
    paths = []
    for metric in ("crashes", "progress", "min_dist"):
        path = out / f"plotdata_{metric}.csv"
        with path.open("w", newline="") as fh:
            fh.write(f"# schema_version: {RESULTS_SCHEMA_VERSION}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("group", "arm", "n", "min", "q1", "median", "q3", "max"))
            for label, en, dis in _facets(live, group_by):
                for arm, recs in (("enabled", en), ("disabled", dis)):
                    q = stats.box_quantiles(stats.metric_values(recs, metric))
                    w.writerow((label, arm, q["n"], *(_fmt(float(q[k])) for k in
                                ("min", "q1", "median", "q3", "max"))))
        paths.append(path)
    return paths


def _facets(records: list[dict], group_by: str | None) -> Iterable[tuple[str, list, list]]:
    en = [r for r in records if stats._truthy(r["trustmhe"])]
    dis = [r for r in records if not stats._truthy(r["trustmhe"])]
    yield "all", en, dis
    if group_by is None:
        return
    source = en if group_by == "t_est" else records
    for key in sorted({str(r[group_by]) for r in source}, key=stats._sort_key):
        e = [r for r in en if str(r[group_by]) == key]
        d = dis if group_by == "t_est" else [r for r in dis if str(r[group_by]) == key]
        yield f"{group_by}={key}", e, d


def cmd_stats(args) -> int:
    records = read_results(Path(args.results))
    if not records:
        print(f"error: results table {args.results} is empty or missing", file=sys.stderr)
        return 2
    report = stats.summarize(records, args.group_by)
    out = Path(args.out) if args.out else Path(args.results).parent
    write_report(report, out)
    write_plot_data(records, args.group_by, out)
    print(f"{'group':<14}{'metric':<10}{'test':<16}{'statistic':>14}{'p':>12}")
    for t in report.tests:
        print(f"{t.group:<14}{t.metric:<10}{t.test:<16}{_fmt(t.statistic):>14}{_fmt(t.p):>12}"
              + (f"  {t.note}" if t.note else ""))
    if report.aborted:
        print(f"aborted runs excluded: {report.aborted}")
    return 0


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trustplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path), repeatable")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./trustplan_out)")

    p = sub.add_parser("run", help="execute one simulation")
    common(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the experiment matrix")
    common(p)
    p.add_argument("--scenarios", default="junction,overtaking,urban")
    p.add_argument("--modes", default="conservative,balanced,aggressive")
    p.add_argument("--noises", default="0.1,1.0")
    p.add_argument("--t-est", default="off,1,3,5,15,30",
                   help="estimation horizons; 'off' is the disabled arm")
    p.add_argument("--seeds", default="0-1", help="list or inclusive ranges, e.g. 0-29,40")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="summarize a results table")
    p.add_argument("results")
    p.add_argument("--group-by", choices=stats.GROUP_KEYS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
