"""``pdmon`` command line.

Exit codes: 0 no drift, 3 drift detected, 1 usage error, 2 data or
ingestion error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..charts import ChartParams, run_chart
from ..core import Dataset, Hypothesis, Kind, Schema
from ..errors import ConfigError, IoError, MonitorError
from ..subgroups import scan_degradation, scan_discrepancy
from .io import infer_schema, ingest_csv, load_schema, write_csv
from .monitor import MonitorConfig, _plain, config_digest, emit_report, parse_report, run_monitor
from .registry import REGISTRY, run_test
from .simulate import KINDS, SIM_SCHEMA, ShiftScenario, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DRIFT = 0, 1, 2, 3
VERDICT_EXIT = {"no_drift": EXIT_OK, "drift_detected": EXIT_DRIFT, "error": EXIT_DATA}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, *, data=True):
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--output", "-o", help="write the result here instead of stdout")
    if data:
        p.add_argument("--baseline", help="CSV for window t0")
        p.add_argument("--current", help="CSV for window t1")
        p.add_argument("--schema", help="schema JSON; inferred from the baseline CSV if omitted")
        p.add_argument("--config", help="monitor config JSON (its schema is used)")
        p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
        p.add_argument("--seed", type=int, help="64-bit seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pdmon", description="Post-deployment monitoring with two-sample tests.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("test", help="run one named test on two CSV files")
    p.add_argument("name", choices=sorted(REGISTRY))
    _common(p)
    p.add_argument("--feature", help="column for univariate tests")
    p.add_argument("--features", help="comma-separated columns for joint tests")
    p.add_argument("--include-label", action="store_true")
    p.add_argument("--sidedness", choices=("two_sided", "greater", "less"), default="two_sided")
    p.add_argument("--tau", type=float)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="test parameter, e.g. n_permutations=500 or metric=recall")

    p = sub.add_parser("monitor", help="run a full monitoring cycle from a config file")
    _common(p)
    p.add_argument("--bonferroni", action="store_true", help="divide alpha by the number of tests")
    p.add_argument("--no-timestamps", action="store_true")

    p = sub.add_parser("chart", help="stream a CSV column through a control chart")
    _common(p)
    p.add_argument("--feature", required=True)
    p.add_argument("--kind", choices=("shewhart", "cusum", "ewma"), default="cusum")
    for name in ("mu0", "sigma0", "L", "k", "h", "lam", "rho"):
        p.add_argument(f"--{name}", type=float)

    p = sub.add_parser("scan", help="search for degraded or shifted subgroups")
    _common(p)
    p.add_argument("--objective", choices=("degradation", "discrepancy"), default="degradation")
    p.add_argument("--metric", default="accuracy")
    p.add_argument("--divergence", choices=("energy", "mmd"), default="energy")
    p.add_argument("--correctness", action="store_true", help="append the correctness indicator")
    p.add_argument("--r", type=int, default=30)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--beam", type=int, default=16)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--bins", type=int, default=4)

    p = sub.add_parser("simulate", help="write a baseline/current CSV pair with a planted shift")
    p.add_argument("--kind", choices=KINDS, default="none")
    p.add_argument("--magnitude", type=float, default=0.0)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--n0", type=int, default=500)
    p.add_argument("--n1", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-timestamps", action="store_true",
                   help="write timestamps: false into the generated config")

    p = sub.add_parser("report", help="re-render a JSON report")
    p.add_argument("path")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--output", "-o")
    return ap


def _write(data: bytes, path: str | None):
    if path:
        Path(path).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _schema(args) -> Schema:
    if getattr(args, "schema", None):
        return load_schema(args.schema)
    if getattr(args, "config", None):
        return MonitorConfig.load(args.config).schema
    if not args.baseline:
        raise UsageError("--baseline is required")
    return infer_schema(args.baseline)


def _windows(args) -> tuple[Dataset, Dataset]:
    if not args.baseline or not args.current:
        raise UsageError("--baseline and --current are required")
    schema = _schema(args)
    return (ingest_csv(args.baseline, schema, "t0", optional_label=True),
            ingest_csv(args.current, schema, "t1", optional_label=True))


def _parse_param(s: str):
    if "=" not in s:
        raise UsageError(f"--param expects KEY=VALUE, got {s!r}")
    k, v = s.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def cmd_test(args) -> int:
    d0, d1 = _windows(args)
    hyp = Hypothesis(0.05 if args.alpha is None else args.alpha, args.sidedness, args.tau)
    params = dict(_parse_param(s) for s in args.param)
    feats = args.features.split(",") if args.features else None
    res = run_test(args.name, d0, d1, hyp, feature=args.feature, features=feats,
                   include_label=args.include_label, seed=args.seed or 0, params=params)
    d = _plain(res.to_dict())
    if args.format == "json":
        out = json.dumps(d, indent=2) + "\n"
    else:
        out = "".join(f"{k:<15} {v}\n" for k, v in d.items() if k != "details")
    _write(out.encode(), args.output)
    return EXIT_DRIFT if res.reject_h0 else EXIT_OK


def cmd_monitor(args) -> int:
    if not args.config:
        raise UsageError("monitor needs --config")
    path = Path(args.config)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        d = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    # command-line flags override the file; the digest still covers the file bytes
    if args.baseline:
        d["baseline"] = str(Path(args.baseline).resolve())
    if args.current:
        d["current"] = str(Path(args.current).resolve())
    if args.alpha is not None:
        d["alpha"] = args.alpha
    if args.seed is not None:
        d["seed"] = args.seed
    if args.bonferroni:
        d["bonferroni"] = True
    if args.no_timestamps:
        d["timestamps"] = False
    config = MonitorConfig.from_dict(d, path.parent, config_digest(raw))
    report = run_monitor(config)
    out = args.output or config.output
    _write(emit_report(report, args.format), out)
    if report.errors:
        for e in report.errors:
            print(f"pdmon: {e}", file=sys.stderr)
    return VERDICT_EXIT[report.verdict]


def cmd_chart(args) -> int:
    if not args.current:
        raise UsageError("--current is required")
    if args.baseline:
        d0, d1 = _windows(args)
    else:
        if args.mu0 is None or args.sigma0 is None:
            raise UsageError("chart needs --baseline or both --mu0 and --sigma0")
        schema = load_schema(args.schema) if args.schema else infer_schema(args.current)
        d0, d1 = None, ingest_csv(args.current, schema, "t1", optional_label=True)
    if args.feature not in d1.schema or d1.schema[args.feature].kind is Kind.CATEGORICAL:
        raise UsageError("--feature must name a numeric column")
    kw = {k: getattr(args, k) for k in ("L", "k", "h", "lam", "rho") if getattr(args, k) is not None}
    if args.mu0 is not None and args.sigma0 is not None:
        params = ChartParams(args.mu0, args.sigma0, **kw)
    else:
        base = ChartParams.from_baseline(d0[args.feature])
        params = ChartParams(args.mu0 if args.mu0 is not None else base.mu0,
                             args.sigma0 if args.sigma0 is not None else base.sigma0, **kw)
    state, alarms = run_chart(d1[args.feature], args.kind, params)
    d = {"feature": args.feature, "chart": args.kind, "params": params.to_dict(),
         "observations": state.t, "alarms": [a.to_dict() for a in alarms],
         "verdict": "drift_detected" if alarms else "no_drift"}
    if args.format == "json":
        out = json.dumps(d, indent=2) + "\n"
    else:
        lines = [f"{args.kind} chart on {args.feature}: {len(alarms)} alarm(s) in {state.t} observations"]
        lines += [f"  onset t={a.t} {a.direction} value={a.value:.4g} lasting {a.duration}" for a in alarms]
        out = "\n".join(lines) + "\n"
    _write(out.encode(), args.output)
    return EXIT_DRIFT if alarms else EXIT_OK


def cmd_scan(args) -> int:
    d0, d1 = _windows(args)
    common = dict(r=args.r, depth=args.depth, beam=args.beam, top_k=args.top_k, bins=args.bins)
    if args.objective == "degradation":
        found = scan_degradation(d0, d1, args.metric, **common)
    else:
        found = scan_discrepancy(d0, d1, args.divergence, correctness=args.correctness, **common)
    rows = [f.to_dict() for f in found]
    if args.format == "json":
        out = json.dumps({"objective": args.objective, "findings": _plain(rows)}, indent=2) + "\n"
    else:
        out = "".join(f"{i + 1}. {r['description']}  objective={r['objective']:.4f}  "
                      f"n0={r['support0']} n1={r['support1']}\n" for i, r in enumerate(rows))
    _write(out.encode(), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = ShiftScenario(args.kind, args.magnitude, args.fraction, args.seed)
    d0, d1 = simulate(scenario, args.n0, args.n1)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(d0, out / "baseline.csv")
    write_csv(d1, out / "current.csv")
    (out / "schema.json").write_text(json.dumps(SIM_SCHEMA.to_dict(), indent=2) + "\n")
    config = {"schema_path": "schema.json", "baseline": "baseline.csv", "current": "current.csv",
              "seed": args.seed, "alpha": 0.05,
              "charts": [{"feature": "x1", "kind": "cusum"}, {"feature": "x1", "kind": "ewma"}]}
    if args.no_timestamps:
        config["timestamps"] = False
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        raw = Path(args.path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read report {args.path}: {exc}") from exc
    try:
        report = parse_report(raw)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"not a monitor report: {exc}") from exc
    _write(emit_report(report, args.format), args.output)
    return VERDICT_EXIT[report.verdict]


COMMANDS = {"test": cmd_test, "monitor": cmd_monitor, "chart": cmd_chart, "scan": cmd_scan,
            "simulate": cmd_simulate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"pdmon: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"pdmon: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MonitorError, OSError) as exc:
        print(f"pdmon: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
