"""Command-line interface: run experiment grids, fit, evaluate, predict, report.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage or
configuration error.  ``STREAMSCALE_SEED`` overrides the config seed; an
explicit ``--seed`` flag overrides both.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, experiment, pipeline, report, usl
from .config import CONFIG_EXAMPLE, ConfigError, load_config

__all__ = ["main"]


def _fail(msg: str, code: int) -> int:
    print(f"streamscale: {msg}", file=sys.stderr)
    return code


def _read_metrics(path: str) -> list[pipeline.RunMetrics]:
    with open(path) as fh:
        return pipeline.metrics_from_csv(fh.read())


def _parse_group_by(spec: str) -> tuple[str, ...]:
    cols = tuple(c.strip() for c in spec.split(",") if c.strip())
    for c in cols:
        if c not in pipeline.METRICS_CSV_FIELDS:
            raise ConfigError(f"unknown group-by column {c!r}")
    return cols


def _group_slug(key: tuple) -> str:
    return "|".join(str(v) for v in key)


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        return _fail(str(exc), 2)
    if args.seed is not None:
        cfg.seed = args.seed
    elif "STREAMSCALE_SEED" in os.environ:
        try:
            cfg.seed = int(os.environ["STREAMSCALE_SEED"])
        except ValueError:
            return _fail("STREAMSCALE_SEED must be an integer", 2)
    try:
        grid = cfg.expand()
    except (ConfigError, ValueError) as exc:
        return _fail(str(exc), 2)
    print(f"grid: {len(grid)} configurations (seed {cfg.seed})")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = experiment.run_grid(
        grid,
        profile_overrides=cfg.profile_overrides,
        cost=cfg.cost,
        jobs=args.jobs,
    )
    rows = experiment.metrics_rows(outcomes)
    (out / "metrics.csv").write_text(pipeline.metrics_to_csv(rows))
    with open(out / "runlog.jsonl", "w") as fh:
        for o in outcomes:
            fh.write(json.dumps(
                {"ts": 0.0, "entity": "run", "id": o.run_id,
                 "transition": "NEW->ACTIVE"}) + "\n")
            end = "ACTIVE->FAILED" if o.failed else "ACTIVE->DONE"
            ts = 0.0 if o.failed else o.metrics.duration_s
            fh.write(json.dumps(
                {"ts": ts, "entity": "run", "id": o.run_id,
                 "transition": end, **({"error": o.error} if o.failed else {})})
                + "\n")
    config_hash = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
    (out / "manifest.json").write_text(json.dumps({
        "tool": "streamscale",
        "version": __version__,
        "config_sha256": config_hash,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }, indent=2) + "\n")

    failures = [o for o in outcomes if o.failed]
    for o in failures:
        print(f"run {o.run_id} failed: {o.error}", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {out / 'metrics.csv'}")
    return 1 if failures else 0


def cmd_fit(args) -> int:
    try:
        rows = _read_metrics(args.data)
        group_by = _parse_group_by(args.group_by)
        if args.y not in pipeline.METRICS_CSV_FIELDS:
            raise ConfigError(f"unknown y column {args.y!r}")
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(str(exc), 2)
    fits, skipped = experiment.fit_group(rows, group_by=group_by, y=args.y)
    out = Path(args.out or Path(args.data).parent)
    out.mkdir(parents=True, exist_ok=True)

    combined = ["group,lambda,sigma,kappa,r2,peak_n"]
    curve_rows = ["group,n,observed,fitted"]
    for key, rep in fits.items():
        slug = _group_slug(key)
        doc = {"group": dict(zip(group_by, key))}
        doc.update(json.loads(usl.report_to_json(rep)))
        fname = "fit_" + slug.replace("|", "_") + ".json"
        (out / fname).write_text(json.dumps(doc, indent=2) + "\n")
        peak = rep.peak_n if rep.peak_n is not None else ""
        combined.append(
            f"{slug},{rep.params.lambda_scale!r},{rep.params.sigma!r},"
            f"{rep.params.kappa!r},{rep.r_squared!r},{peak}"
        )
        observed = {}
        for r in rows:
            if tuple(getattr(r, g) for g in group_by) == key:
                observed.setdefault(r.n_part_px, []).append(getattr(r, args.y))
        n_max = max(observed)
        for n in range(1, max(int(1.25 * n_max), n_max + 1) + 1):
            fitted = usl.usl_eval(rep.params, n)
            if n in observed:
                for y in observed[n]:
                    curve_rows.append(f"{slug},{n},{y!r},{fitted!r}")
            else:
                curve_rows.append(f"{slug},{n},,{fitted!r}")
    (out / "fits.csv").write_text("\n".join(combined) + "\n")
    (out / "curves.csv").write_text("\n".join(curve_rows) + "\n")
    for key, reason in skipped:
        print(f"group {_group_slug(key)} skipped: {reason}", file=sys.stderr)
    print(f"fitted {len(fits)} groups -> {out / 'fits.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    try:
        rows = _read_metrics(args.data)
        group_by = _parse_group_by(args.group_by)
        sizes = [int(s) for s in args.train_sizes.split(",") if s.strip()]
        if not sizes or any(s < 2 for s in sizes):
            raise ConfigError("training sizes must be integers >= 2")
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(str(exc), 2)
    reports, skipped = experiment.evaluate(
        rows, training_sizes=sizes, group_by=group_by, y=args.y
    )
    out = Path(args.out or Path(args.data).parent)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["group,k,rmse,r_squared"]
    for rep in reports:
        slug = _group_slug(rep.group)
        for k, rm, r2 in zip(rep.training_sizes, rep.rmse, rep.r_squared):
            lines.append(f"{slug},{k},{rm!r},{r2!r}")
    for key, reason in skipped:
        lines.append(f"{_group_slug(key)},,,")
        print(f"group {_group_slug(key)} skipped: {reason}", file=sys.stderr)
    (out / "evaluation.csv").write_text("\n".join(lines) + "\n")
    print(f"evaluated {len(reports)} groups -> {out / 'evaluation.csv'}")
    return 0


def cmd_predict(args) -> int:
    try:
        rep = usl.report_from_json(Path(args.model).read_text())
    except (OSError, KeyError, ValueError) as exc:
        return _fail(f"cannot load model: {exc}", 2)
    try:
        if args.n is not None:
            print(f"{usl.predict(rep, args.n)!r}")
        else:
            n = experiment.recommend(rep, args.target)
            print(n)
    except usl.UnconvergedModel as exc:
        return _fail(str(exc), 1)
    except experiment.Infeasible as exc:
        print(f"infeasible: {exc}")
    return 0


def _read_simple_csv(path: Path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    d = Path(args.dir)
    curves = d / "curves.csv"
    evaluation = d / "evaluation.csv"
    missing = [str(p) for p in (curves, evaluation) if not p.exists()]
    if len(missing) == 2:
        return _fail("nothing to report; missing: " + ", ".join(missing), 2)

    made = []
    if curves.exists():
        rows = _read_simple_csv(curves)
        groups: dict[str, dict[str, report.Series]] = {}
        for r in rows:
            g = groups.setdefault(r["group"], {
                "obs": report.Series(name=r["group"], style="points"),
                "fit": report.Series(name=r["group"] + " (fit)", style="line",
                                     dashed=True),
            })
            n = int(r["n"])
            if r["observed"]:
                g["obs"].points.append((n, float(r["observed"])))
            g["fit"].points.append((n, float(r["fitted"])))
        series = [s for g in groups.values() for s in g.values()]
        svg = report.line_chart(
            "Throughput vs processing partitions",
            "partitions", "throughput (msgs/s)", series,
        )
        (d / "report_fit.svg").write_text(svg)
        (d / "report_fit_data.csv").write_text(curves.read_text())
        made.append("report_fit.svg")
    if evaluation.exists():
        rows = [r for r in _read_simple_csv(evaluation) if r["k"]]
        groups2: dict[str, report.Series] = {}
        for r in rows:
            s = groups2.setdefault(r["group"], report.Series(name=r["group"]))
            s.points.append((int(r["k"]), float(r["rmse"])))
        svg = report.line_chart(
            "Prediction error vs training configurations",
            "training sizes k", "rmse (msgs/s)", list(groups2.values()),
        )
        (d / "report_rmse.svg").write_text(svg)
        (d / "report_rmse_data.csv").write_text(evaluation.read_text())
        made.append("report_rmse.svg")
    else:
        print("evaluation.csv missing: rmse chart skipped", file=sys.stderr)
    print("wrote " + ", ".join(made))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="streamscale",
        description="Characterize and model streaming-pipeline scalability.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment grid")
    run.add_argument("--config", required=True, help="YAML grid configuration")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None,
                     help="override config seed (beats STREAMSCALE_SEED)")
    run.add_argument("--jobs", type=int, default=1,
                     help="parallel simulation processes")
    run.set_defaults(func=cmd_run)

    fit = sub.add_parser("fit", help="fit the scalability law per group")
    fit.add_argument("--data", required=True, help="metrics CSV path")
    fit.add_argument("--group-by", default=",".join(experiment.DEFAULT_GROUP_BY))
    fit.add_argument("--y", default=experiment.DEFAULT_Y)
    fit.add_argument("--out", default=None, help="output directory")
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="train/holdout evaluation sweep")
    ev.add_argument("--data", required=True)
    ev.add_argument("--train-sizes", required=True, help="e.g. 2,3,4")
    ev.add_argument("--group-by", default=",".join(experiment.DEFAULT_GROUP_BY))
    ev.add_argument("--y", default=experiment.DEFAULT_Y)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="predict throughput or recommend size")
    pr.add_argument("--model", required=True, help="fit-report JSON path")
    g = pr.add_mutually_exclusive_group(required=True)
    g.add_argument("--n", type=int, help="partitions to predict for")
    g.add_argument("--target", type=float, help="target throughput (msgs/s)")
    pr.set_defaults(func=cmd_predict)

    rp = sub.add_parser("report", help="emit SVG figure bundle")
    rp.add_argument("--dir", required=True, help="directory with fit outputs")
    rp.set_defaults(func=cmd_report)

    ex = sub.add_parser("example-config", help="print an exhaustive config example")
    ex.set_defaults(func=lambda args: (print(CONFIG_EXAMPLE, end=""), 0)[1])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
