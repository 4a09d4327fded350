"""Staged monitoring run: data-shift tests, label-dependent tests, then
subgroup scans if anything rejected.

Stages, in order:

* ``covariate_shift``: tests on the feature distribution p(s, c);
* ``concept_drift``: joint tests on (s, c, y), labels required in both windows;
* ``performance``: deviation and specification-threshold tests;
* ``correctness_shift``: joint test on (s, c, z) with z the correctness indicator.

Subgroup scans run only when at least one test rejected.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..charts import ChartParams, run_chart
from ..core import Dataset, Hypothesis, Kind, Schema, TestResult
from ..errors import ConfigError, IoError, MonitorError, NoFeasibleSubgroup
from ..subgroups import SubgroupFinding, scan_degradation, scan_discrepancy
from .io import ingest_csv
from .registry import LABELED, REGISTRY, run_test

STAGES = ("covariate_shift", "concept_drift", "performance", "correctness_shift")
LABEL_STAGES = ("concept_drift", "performance", "correctness_shift")
VERDICTS = ("no_drift", "drift_detected", "error")
LABELS_UNAVAILABLE = "labels unavailable"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestConfig:
    name: str
    stage: str
    feature: str | None = None
    features: tuple[str, ...] | None = None
    include_label: bool = False
    params: dict = field(default_factory=dict)
    hypothesis: Hypothesis = Hypothesis()

    __test__ = False

    @property
    def target(self) -> str:
        if self.name in ("deviation", "spec_threshold"):
            return str(self.params.get("metric", "accuracy"))
        if self.name == "correctness_shift":
            return "all_features+correctness"
        if self.feature:
            return self.feature
        cols = ",".join(self.features) if self.features else "all_features"
        return cols + ("+label" if self.include_label else "")


@dataclass(frozen=True)
class ChartConfig:
    feature: str
    kind: str
    params: dict = field(default_factory=dict)  # mu0/sigma0 default to baseline estimates


@dataclass(frozen=True)
class ScanConfig:
    enabled: bool = True
    metric: str = "accuracy"
    divergence: str = "energy"
    r: int = 30
    depth: int = 2
    beam: int = 16
    top_k: int = 5
    bins: int = 4


@dataclass(frozen=True)
class MonitorConfig:
    schema: Schema
    baseline: str
    current: str
    tests: tuple[TestConfig, ...]
    charts: tuple[ChartConfig, ...] = ()
    scan: ScanConfig = ScanConfig()
    seed: int = 0
    alpha: float = 0.05
    bonferroni: bool = False
    output: str | None = None
    timestamps: bool = True
    digest: str = ""

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        for t in self.tests:
            if t.name not in REGISTRY:
                raise ConfigError(f"unknown test {t.name!r}")
            if t.stage not in STAGES:
                raise ConfigError(f"unknown stage {t.stage!r} for test {t.name!r}")
            for f in ([t.feature] if t.feature else []) + list(t.features or ()):
                if f not in self.schema:
                    raise ConfigError(f"test {t.name!r} references unknown feature {f!r}")
        for c in self.charts:
            if c.feature not in self.schema:
                raise ConfigError(f"chart references unknown feature {c.feature!r}")
            if c.kind not in ("shewhart", "cusum", "ewma"):
                raise ConfigError(f"unknown chart kind {c.kind!r}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | str = ".", digest: str = "") -> "MonitorConfig":
        base = Path(base_dir)
        try:
            if "schema" in d:
                schema = Schema.from_dict(d["schema"])
            elif "schema_path" in d:
                sp = base / d["schema_path"]
                schema = Schema.from_dict(json.loads(sp.read_text(encoding="utf-8")))
            else:
                raise ConfigError("config needs 'schema' or 'schema_path'")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid schema: {exc}") from exc
        except OSError as exc:
            raise IoError(f"cannot read schema: {exc}") from exc
        alpha = float(d.get("alpha", 0.05))
        try:
            if "tests" in d:
                tests = tuple(_test_from_dict(t, alpha) for t in d["tests"])
            else:
                tests = default_tests(schema, alpha, d.get("performance", {}))
            charts = tuple(ChartConfig(c["feature"], c.get("kind", "cusum"), dict(c.get("params", {})))
                           for c in d.get("charts", []))
            scan = ScanConfig(**d.get("subgroups", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

        def resolve(p):
            return None if p is None else str(base / p) if not Path(p).is_absolute() else p

        if "baseline" not in d or "current" not in d:
            raise ConfigError("config needs 'baseline' and 'current' paths")
        return cls(schema=schema, baseline=resolve(d["baseline"]), current=resolve(d["current"]),
                   tests=tests, charts=charts, scan=scan, seed=int(d.get("seed", 0)), alpha=alpha,
                   bonferroni=bool(d.get("bonferroni", False)), output=resolve(d.get("output")),
                   timestamps=bool(d.get("timestamps", True)), digest=digest)

    @classmethod
    def load(cls, path) -> "MonitorConfig":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        try:
            d = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d, path.parent, config_digest(raw))


def config_digest(raw: bytes) -> str:
    return "sha256:" + hashlib.sha256(raw).hexdigest()


def _test_from_dict(t: dict, alpha: float) -> TestConfig:
    name = t["name"]
    if name not in REGISTRY:
        raise ConfigError(f"unknown test {name!r}")
    h = dict(t.get("hypothesis", {}))
    h.setdefault("alpha", alpha)
    feats = t.get("features")
    return TestConfig(name=name, stage=t.get("stage", REGISTRY[name].default_stage),
                      feature=t.get("feature"), features=tuple(feats) if feats else None,
                      include_label=bool(t.get("include_label", False)),
                      params=dict(t.get("params", {})), hypothesis=Hypothesis(**h))


def default_tests(schema: Schema, alpha: float = 0.05, performance: dict | None = None
                  ) -> tuple[TestConfig, ...]:
    """KS (numeric) or JS (categorical) per feature, a joint energy test on the
    features plus label, the accuracy deviation test and the correctness-shift test."""
    perf = dict(performance or {})
    hyp = Hypothesis(alpha)
    tests = []
    for c in schema.features:
        name = "js" if c.kind is Kind.CATEGORICAL else "ks"
        tests.append(TestConfig(name, "covariate_shift", feature=c.name, hypothesis=hyp))
    tests.append(TestConfig("energy", "concept_drift", include_label=True, hypothesis=hyp))
    metric = perf.get("metric", "accuracy")
    tests.append(TestConfig("deviation", "performance", params={"metric": metric},
                            hypothesis=Hypothesis(alpha, tau=float(perf.get("tau_deg", 0.05)))))
    if perf.get("tau_spec") is not None:
        tests.append(TestConfig("spec_threshold", "performance", params={"metric": metric},
                                hypothesis=Hypothesis(alpha, tau=float(perf["tau_spec"]))))
    tests.append(TestConfig("correctness_shift", "correctness_shift", params={"method": "mmd"},
                            hypothesis=hyp))
    return tuple(tests)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _plain(x):
    """JSON-native copy: numpy scalars to Python numbers, tuples to lists."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


@dataclass(frozen=True)
class TestRecord:
    stage: str
    name: str
    target: str
    result: TestResult

    __test__ = False

    def to_dict(self) -> dict:
        return {"stage": self.stage, "name": self.name, "target": self.target,
                "result": self.result.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "TestRecord":
        return cls(d["stage"], d["name"], d["target"], TestResult.from_dict(d["result"]))


@dataclass(frozen=True)
class MonitorReport:
    metadata: dict
    results: tuple[TestRecord, ...]
    skipped: tuple[dict, ...] = ()
    alarms: tuple[dict, ...] = ()
    subgroups: tuple[dict, ...] = ()
    notes: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()
    verdict: str = "no_drift"

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"bad verdict {self.verdict!r}")

    @property
    def rejected(self) -> list[TestRecord]:
        return [r for r in self.results if r.result.reject_h0]

    def stage_summary(self) -> dict:
        out = {}
        for s in STAGES:
            recs = [r for r in self.results if r.stage == s]
            out[s] = {"tests_run": len(recs), "rejected": sum(r.result.reject_h0 for r in recs)}
        return out

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "metadata": self.metadata,
            "stages": self.stage_summary(),
            "results": [r.to_dict() for r in self.results],
            "skipped": list(self.skipped),
            "chart_alarms": list(self.alarms),
            "subgroups": list(self.subgroups),
            "notes": list(self.notes),
            "errors": list(self.errors),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonitorReport":
        return cls(metadata=d["metadata"],
                   results=tuple(TestRecord.from_dict(r) for r in d["results"]),
                   skipped=tuple(d.get("skipped", ())), alarms=tuple(d.get("chart_alarms", ())),
                   subgroups=tuple(d.get("subgroups", ())), notes=tuple(d.get("notes", ())),
                   errors=tuple(d.get("errors", ())), verdict=d["verdict"])


def _order(records) -> tuple[TestRecord, ...]:
    """Rejecting tests first, then stage order, stable within a stage."""
    idx = {s: i for i, s in enumerate(STAGES)}
    return tuple(sorted(records, key=lambda r: (not r.result.reject_h0, idx[r.stage])))


def emit_report(report: MonitorReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n").encode("utf-8")
    if fmt == "text":
        return render_text(report).encode("utf-8")
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(data: bytes | str) -> MonitorReport:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return MonitorReport.from_dict(json.loads(data))


def _fmt_num(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float) and (math.isinf(v) or abs(v) >= 1e4 or (v != 0 and abs(v) < 1e-3)):
        return f"{v:.3e}"
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def render_text(report: MonitorReport) -> str:
    lines = [f"verdict: {report.verdict}"]
    meta = report.metadata
    lines.append(f"seed: {meta.get('seed')}  config: {meta.get('config_digest', '')}")
    if meta.get("bonferroni"):
        lines.append(f"bonferroni: alpha per test = {_fmt_num(meta.get('alpha_per_test'))}")
    header = f"{'stage':<18} {'test':<44} {'target':<26} {'statistic':>11} {'p':>10} {'crit':>10}  reject"
    lines += ["", header, "-" * len(header)]
    for r in report.results:
        res = r.result
        lines.append(f"{r.stage:<18} {res.method[:44]:<44} {r.target[:26]:<26} "
                     f"{_fmt_num(res.statistic):>11} {_fmt_num(res.p_value):>10} "
                     f"{_fmt_num(res.critical_value):>10}  {'YES' if res.reject_h0 else 'no'}")
    for s in report.skipped:
        lines.append(f"{s['stage']:<18} {s['name'][:44]:<44} skipped: {s['reason']}")
    if report.alarms:
        lines += ["", "chart alarms:"]
        for a in report.alarms:
            lines.append(f"  {a['feature']} {a['chart']} onset t={a['t']} {a['direction']} "
                         f"value={_fmt_num(a['value'])} lasting {a['duration']} step(s)")
    if report.subgroups:
        lines += ["", "subgroup findings (exploratory, no multiplicity correction):"]
        for g in report.subgroups:
            lines.append(f"  [{g['objective_kind']}] {g['description']}  objective={_fmt_num(g['objective'])}"
                         f"  n0={g['support0']} n1={g['support1']}")
    for n in report.notes:
        lines.append(f"note: {n}")
    for e in report.errors:
        lines.append(f"error: {e}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _applicable(t: TestConfig, d0: Dataset, d1: Dataset) -> str | None:
    """Reason a test cannot run, or None."""
    needs_labels = t.stage in LABEL_STAGES or REGISTRY[t.name].shape == LABELED or t.include_label
    if needs_labels and not (d0.has_labels and d1.has_labels):
        return LABELS_UNAVAILABLE
    return None


def run_monitor(config: MonitorConfig, d0: Dataset | None = None,
                d1: Dataset | None = None) -> MonitorReport:
    """Execute one monitoring cycle. Windows are read from the config paths
    unless passed in directly. Failures produce a partial report with
    verdict ``error``."""
    started = _now() if config.timestamps else None
    meta = {"tool_version": __version__, "seed": config.seed, "config_digest": config.digest,
            "alpha": config.alpha, "bonferroni": config.bonferroni,
            "baseline": config.baseline, "current": config.current}
    records, skipped, notes, errors, alarms, findings = [], [], [], [], [], []

    def finish(verdict):
        if config.timestamps:
            meta["started_at"] = started
            meta["finished_at"] = _now()
        return MonitorReport(_plain(meta), _order(records), tuple(_plain(skipped)),
                             tuple(_plain(alarms)), tuple(_plain(findings)), tuple(notes),
                             tuple(errors), verdict)

    try:
        if d0 is None:
            d0 = ingest_csv(config.baseline, config.schema, "t0", optional_label=True)
        if d1 is None:
            d1 = ingest_csv(config.current, config.schema, "t1", optional_label=True)
    except (MonitorError, OSError) as exc:
        errors.append(f"ingestion: {exc}")
        return finish("error")
    meta["n0"], meta["n1"] = d0.n, d1.n

    runnable = []
    for t in config.tests:
        reason = _applicable(t, d0, d1)
        if reason:
            skipped.append({"stage": t.stage, "name": t.name, "target": t.target, "reason": reason})
        else:
            runnable.append(t)
    if any(s["reason"] == LABELS_UNAVAILABLE for s in skipped):
        notes.append("labels unavailable in at least one window; label-dependent stages skipped")
    n_tests = max(1, len(runnable))
    if config.bonferroni:
        meta["alpha_per_test"] = config.alpha / n_tests
        notes.append(f"Bonferroni: alpha divided by {n_tests} tests")
    else:
        notes.append(f"raw per-test alpha over {len(runnable)} tests; family-wise error may exceed alpha")

    for stage in STAGES:
        for i, t in enumerate(runnable):
            if t.stage != stage:
                continue
            hyp = t.hypothesis
            if config.bonferroni:
                hyp = hyp.replace(alpha=hyp.alpha / n_tests)
            seed = (config.seed + i) % 2 ** 64
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    res = run_test(t.name, d0, d1, hyp, feature=t.feature, features=t.features,
                                   include_label=t.include_label, seed=seed, params=t.params)
            except MonitorError as exc:
                errors.append(f"{stage}/{t.name}[{t.target}]: {exc}")
                continue
            notes.extend(f"{stage}/{t.name}[{t.target}]: {w.message}" for w in caught)
            res = TestResult.from_dict(_plain(res.to_dict()))
            records.append(TestRecord(stage, t.name, t.target, res))

    for c in config.charts:
        try:
            alarms.extend(_run_chart(c, d0, d1))
        except (MonitorError, ValueError) as exc:
            errors.append(f"chart/{c.kind}[{c.feature}]: {exc}")

    if config.scan.enabled and any(r.result.reject_h0 for r in records):
        findings.extend(_scan(config.scan, d0, d1, notes, errors))

    if errors:
        return finish("error")
    return finish("drift_detected" if any(r.result.reject_h0 for r in records) else "no_drift")


def _run_chart(c: ChartConfig, d0: Dataset, d1: Dataset) -> list[dict]:
    if d0.schema[c.feature].kind is Kind.CATEGORICAL:
        raise ConfigError(f"chart feature {c.feature!r} is categorical")
    params = _baseline_params(d0[c.feature], dict(c.params))
    _, alarms = run_chart(d1[c.feature], c.kind, params)
    out = []
    for a in alarms:
        d = a.to_dict()
        d["feature"] = c.feature
        out.append(d)
    return out


def _baseline_params(x0, p: dict) -> ChartParams:
    """Chart parameters with mu0/sigma0 estimated from the baseline unless given."""
    kw = {("lam" if k == "lambda" else k): v for k, v in p.items() if k not in ("mu0", "sigma0")}
    if "mu0" in p and "sigma0" in p:
        return ChartParams(mu0=float(p["mu0"]), sigma0=float(p["sigma0"]), **kw)
    base = ChartParams.from_baseline(x0)
    return ChartParams(mu0=float(p.get("mu0", base.mu0)), sigma0=float(p.get("sigma0", base.sigma0)), **kw)


def _scan(sc: ScanConfig, d0: Dataset, d1: Dataset, notes: list, errors: list) -> list[dict]:
    out = []
    labeled = d0.has_labels and d1.has_labels
    jobs = []
    if labeled:
        jobs.append(("degradation", lambda: scan_degradation(
            d0, d1, sc.metric, r=sc.r, depth=sc.depth, beam=sc.beam, top_k=sc.top_k, bins=sc.bins)))
        jobs.append(("correctness_discrepancy", lambda: scan_discrepancy(
            d0, d1, sc.divergence, r=sc.r, depth=sc.depth, beam=sc.beam, top_k=sc.top_k,
            bins=sc.bins, correctness=True)))
    else:
        jobs.append(("feature_discrepancy", lambda: scan_discrepancy(
            d0, d1, sc.divergence, r=sc.r, depth=sc.depth, beam=sc.beam, top_k=sc.top_k,
            bins=sc.bins)))
    for kind, job in jobs:
        try:
            found: list[SubgroupFinding] = job()
        except NoFeasibleSubgroup as exc:
            notes.append(f"subgroup scan {kind}: {exc}")
            continue
        except MonitorError as exc:
            errors.append(f"subgroup scan {kind}: {exc}")
            continue
        for f in found:
            d = f.to_dict()
            d["objective_kind"] = kind
            out.append(d)
    return out
