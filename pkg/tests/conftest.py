import numpy as np
from hypothesis import settings

from pdmon.core import Column, Dataset, Kind, Role, Schema

# criterion -> [(part, passed, detail, seconds)], filled by test_acceptance
ACCEPTANCE: dict[int, list] = {}

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

LABELED = Schema((
    Column("x", Role.INPUT),
    Column("site", Role.CLINICAL, Kind.CATEGORICAL),
    Column("label", Role.LABEL),
    Column("prediction", Role.PREDICTION),
))


def from_confusion(tp, tn, fp, fn, window="t0", seed=0):
    """Labeled window with exactly the given confusion cells, in shuffled order."""
    y = np.r_[np.ones(tp), np.zeros(tn), np.zeros(fp), np.ones(fn)].astype(np.int8)
    yh = np.r_[np.ones(tp), np.zeros(tn), np.ones(fp), np.zeros(fn)].astype(np.int8)
    rng = np.random.default_rng(seed)
    order = rng.permutation(y.size)
    n = y.size
    return Dataset(LABELED, {"x": rng.normal(size=n), "site": np.array(["A", "B"], dtype=object)[order % 2],
                             "label": y[order], "prediction": yh[order]}, window)


def summary_lines() -> list[str]:
    lines = []
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[1] for p in parts)
        secs = sum(p[3] for p in parts)
        shown = [p for p in parts if not p[1]] if c == 2 and not ok else parts
        if c == 2 and ok:
            rates = [float(p[2].split("=")[1]) for p in parts]
            text = f"{len(parts)} tests, rates in [{min(rates):.4f}, {max(rates):.4f}]"
        else:
            text = "; ".join(p[2] for p in shown)
            if c == 2:
                text = f"{len(parts) - len(shown)}/{len(parts)} in band; outside: {text}"
        lines.append(f"criterion {c}: {'PASS' if ok else 'FAIL'} ({secs:.0f}s) {text}")
    return lines


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in summary_lines():
            terminalreporter.write_line(line)
