import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdmon.core import Column, Dataset, Kind, Role, Schema
from pdmon.errors import NoFeasibleSubgroup
from pdmon.subgroups import (
    PredicateAtom, SubgroupFinding, build_atoms, scan_degradation, scan_discrepancy,
)

SCHEMA = Schema((
    Column("age", Role.CLINICAL),
    Column("site", Role.CLINICAL, Kind.CATEGORICAL),
    Column("x", Role.INPUT),
    Column("label", Role.LABEL),
    Column("prediction", Role.PREDICTION),
))


def window(n, rng, accuracy, name="t0", shift=None):
    age = rng.uniform(20, 90, n)
    site = np.array(["A", "B", "C"], dtype=object)[rng.integers(0, 3, n)]
    x = rng.normal(size=n)
    if shift is not None:
        x = x + shift(site)
    pred = rng.integers(0, 2, n).astype(np.int8)
    acc = accuracy(age, site) if callable(accuracy) else np.full(n, accuracy)
    label = np.where(rng.random(n) < acc, pred, 1 - pred).astype(np.int8)
    return Dataset(SCHEMA, {"age": age, "site": site, "x": x, "label": label, "prediction": pred}, name)


def planted(n=2000, seed=0):
    """Accuracy 0.95 everywhere except {site=B and oldest quartile} in t1, where it is 0.55."""
    rng = np.random.default_rng(seed)
    d0 = window(n, rng, 0.95)
    probe = window(n, rng, 0.95, "t1")
    q4 = [a for a in build_atoms(SCHEMA, d0, probe, features=["age"]) if a.closed][0]
    acc = lambda age, site: np.where((site == "B") & (age >= q4.lo), 0.55, 0.95)
    d1 = window(n, np.random.default_rng(seed + 100), acc, "t1")
    return d0, d1


def test_atom_counts():
    rng = np.random.default_rng(0)
    d0, d1 = window(100, rng, 0.9), window(80, rng, 0.9, "t1")
    atoms = build_atoms(SCHEMA, d0, d1)
    by_feature = {f: sum(a.feature == f for a in atoms) for f in ("age", "site", "x")}
    assert by_feature == {"age": 4, "site": 3, "x": 4}
    # numeric atoms tile the observed range
    for f in ("age", "x"):
        pooled = np.concatenate([d0[f], d1[f]])
        cover = np.zeros(pooled.size, int)
        for a in atoms:
            if a.feature == f:
                cover += (pooled >= a.lo) & ((pooled <= a.hi) if a.closed else (pooled < a.hi))
        assert np.all(cover == 1)


def test_two_level_categorical():
    rng = np.random.default_rng(1)
    d0 = window(20, rng, 0.9)
    d0 = Dataset(SCHEMA, {**d0.data, "site": np.array(["A", "B"] * 10, dtype=object)})
    atoms = build_atoms(SCHEMA, d0, d0, features=["site"])
    assert [a.value for a in atoms] == ["A", "B"]


def test_constant_feature_collapses():
    rng = np.random.default_rng(2)
    d = window(30, rng, 0.9)
    d = Dataset(SCHEMA, {**d.data, "x": np.full(30, 1.5)})
    atoms = build_atoms(SCHEMA, d, d, features=["x"])
    assert len(atoms) == 1 and atoms[0].mask(d).all()


def test_planted_conjunction_ranked_first():
    d0, d1 = planted()
    top = scan_degradation(d0, d1, r=50)[0]
    feats = {a.feature: a for a in top.atoms}
    assert set(feats) == {"site", "age"}
    assert feats["site"].value == "B" and feats["age"].closed
    assert top.metric0 == pytest.approx(0.95, abs=0.04)
    assert top.metric1 == pytest.approx(0.55, abs=0.08)
    assert top.support0 >= 50 and top.support1 >= 50


def test_beam_equals_exhaustive_on_planted():
    d0, d1 = planted(800, seed=3)
    beam = scan_degradation(d0, d1, r=20, beam=16, top_k=3)
    exh = scan_degradation(d0, d1, r=20, top_k=3, strategy="exhaustive")
    assert [f.objective for f in beam] == [f.objective for f in exh]
    assert beam == exh


def test_identical_windows_have_no_degradation():
    d0, _ = planted(500)
    assert scan_degradation(d0, d0, r=20)[0].objective == 0.0
    for f in scan_discrepancy(d0, d0, r=20):
        assert f.objective == 0.0


def test_discrepancy_finds_shifted_site():
    rng = np.random.default_rng(4)
    d0 = window(600, rng, 0.9)
    d1 = window(600, rng, 0.9, "t1", shift=lambda site: np.where(site == "C", 2.0, 0.0))
    for div in ("energy", "mmd"):
        top = scan_discrepancy(d0, d1, div, r=30, depth=1)[0]
        assert [str(a) for a in top.atoms] == ["site=C"], div


def test_every_finding_meets_support():
    d0, d1 = planted(400, seed=5)
    for f in scan_degradation(d0, d1, r=25, top_k=50):
        assert f.support0 >= 25 and f.support1 >= 25
        assert len({a.feature for a in f.atoms}) == len(f.atoms)


def test_no_feasible_subgroup():
    d0, d1 = planted(100)
    with pytest.raises(NoFeasibleSubgroup):
        scan_degradation(d0, d1, r=500)


def test_argument_validation():
    d0, d1 = planted(100)
    with pytest.raises(ValueError):
        scan_discrepancy(d0, d1, r=1)
    with pytest.raises(ValueError):
        scan_degradation(d0, d1, depth=0)
    with pytest.raises(ValueError):
        build_atoms(SCHEMA, d0, d1, bins=1)


def test_deterministic_and_serialisable():
    d0, d1 = planted(500, seed=6)
    a = scan_degradation(d0, d1, r=20)
    b = scan_degradation(d0, d1, r=20)
    assert a == b
    assert [SubgroupFinding.from_dict(f.to_dict()) for f in a] == a
    atom = a[0].atoms[0]
    assert PredicateAtom.from_dict(atom.to_dict()) == atom


@given(st.integers(0, 10_000), st.integers(5, 60), st.integers(1, 40))
def test_shrinking_r_never_lowers_top_objective(seed, r_hi, gap):
    d0, d1 = planted(200, seed=seed % 50)
    r_lo = max(1, r_hi - gap)
    try:
        hi = scan_degradation(d0, d1, r=r_hi, strategy="exhaustive")[0].objective
    except NoFeasibleSubgroup:
        return
    assert scan_degradation(d0, d1, r=r_lo, strategy="exhaustive")[0].objective >= hi
