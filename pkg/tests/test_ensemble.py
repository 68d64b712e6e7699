import itertools
import json

import numpy as np
import pytest

from drrules.colgen import ColgenConfig
from drrules.dataset import BinaryDataset, FeatureMeta, empirical_pmf
from drrules.dro import CHI2, RobustBall
from drrules.ensemble import (
    Collection, EnsembleError, TrainConfig, TrainedModel, budgets, cycling_diagnostic,
    default_delta, find_modes, grow_step, histogram, ip_objective, rel_improvement,
    select_sparse, train,
)
from drrules.rules import Conjunction, RuleSet, margin_loss_from_scores
from oracles import ensemble_ip_bruteforce


def make(X, y):
    X = np.asarray(X, dtype=np.uint8)
    return BinaryDataset(X, y, tuple(FeatureMeta(f"x{j}", "=", "1") for j in range(X.shape[1])))


def separable_toy():
    X = np.array(list(itertools.product([0, 1], repeat=3)), dtype=np.uint8)
    y = (X[:, 0] & X[:, 1]).astype(int)
    return make(X, y)


def random_collection(rng, N, n, d=5):
    X = rng.integers(0, 2, (N, d)).astype(np.uint8)
    y = rng.integers(0, 2, N)
    col = Collection.empty(y)
    seen = set()
    while col.n < n:
        lits = tuple(sorted(rng.choice(d, int(rng.integers(1, 3)), replace=False)))
        h = RuleSet([Conjunction((int(j), 1) for j in lits)])
        if lits in seen:
            continue
        seen.add(lits)
        col.add(h, h.evaluate(X))
    return col, X, y


def test_empty_collection_margin_loss():
    y = np.array([1, 0, 1, 0])
    col = Collection.empty(y)
    np.testing.assert_array_equal(col.F, 0)
    np.testing.assert_allclose(margin_loss_from_scores(col.F, y), [0.5, 0, 0.5, 0])


def test_first_step_on_separable_toy():
    ds = separable_toy()
    col = Collection.empty(ds.y)
    col, res, sol = grow_step(col, ds, RobustBall(CHI2, 0.05), ColgenConfig())
    assert res.ruleset.format() == "(f0=1 AND f1=1)"
    np.testing.assert_array_equal(margin_loss_from_scores(col.F, ds.y), 0)
    np.testing.assert_allclose(col.P, empirical_pmf(ds.n))


def test_aggregate_lattice_and_exactness():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, (40, 6)).astype(np.uint8)
    y = (X[:, 0] | X[:, 2] & X[:, 4]).astype(int)
    y[rng.random(40) < 0.2] ^= 1
    ds = make(X, y)
    col = Collection.empty(y)
    ball = RobustBall(CHI2, 0.05)
    for n in range(1, 4):
        col, _, sol = grow_step(col, ds, ball, ColgenConfig())
        F = col.F
        expect = np.mean(np.column_stack([h.evaluate(X) for h in col.members]), axis=1)
        np.testing.assert_array_equal(F, expect)
        z = margin_loss_from_scores(F, y)
        assert sol.value >= z.mean() - 1e-12
        assert all(h.complexity <= 5 for h in col.members)
    assert set(np.round(col.F * 3).astype(int)) <= {0, 1, 2, 3}


def test_select_single_perfect_member():
    ds = separable_toy()
    col = Collection.empty(ds.y)
    h = RuleSet([Conjunction([(0, 1), (1, 1)])])
    col.add(h, h.evaluate(ds.X))
    sel = select_sparse(col, empirical_pmf(ds.n), 10, 0.25)
    assert sel.objective == pytest.approx(0.0, abs=1e-12)
    assert len(sel.ensemble) == 1 and sel.ensemble.weights[0] == 1.0


def test_select_infeasible_budget():
    ds = separable_toy()
    col = Collection.empty(ds.y)
    h = RuleSet([Conjunction([(0, 1), (1, 1)])])
    col.add(h, h.evaluate(ds.X))
    with pytest.raises(EnsembleError, match="infeasible"):
        select_sparse(col, empirical_pmf(ds.n), 2, 0.25)
    with pytest.raises(EnsembleError):
        select_sparse(col, empirical_pmf(ds.n), 10, 0.5)
    with pytest.raises(EnsembleError):
        select_sparse(Collection.empty(ds.y), empirical_pmf(ds.n), 10, 0.25)


@pytest.mark.parametrize("backend", ["highs", "internal"])
def test_select_matches_bruteforce(backend):
    rng = np.random.default_rng(3)
    for _ in range(4):
        col, X, y = random_collection(rng, 12, 6)
        p = rng.dirichlet(np.ones(12))
        costs = np.array([h.complexity for h in col.members], float)
        C = float(np.sort(costs)[:2].sum())
        sel = select_sparse(col, p, C, 0.1, backend=backend)
        best = ensemble_ip_bruteforce(col.H, y, p, costs, C, 0.1)
        assert sel.objective == pytest.approx(best, abs=1e-6)
        assert sel.ensemble.complexity <= C
        assert ip_objective(sel.ensemble.score(X), y, p, 0.1) == pytest.approx(best, abs=1e-6)


def test_objective_nonincreasing_in_budget():
    rng = np.random.default_rng(8)
    col, X, y = random_collection(rng, 30, 8)
    p = empirical_pmf(30)
    vals = [select_sparse(col, p, C, 0.05).objective for C in (5, 10, 15, 20, 25, 30)]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def test_default_delta_and_budgets():
    assert default_delta(10, 5) == 0.25
    assert default_delta(30, 5) == pytest.approx(1 / 12)
    assert budgets(5, 30) == [10, 15, 20, 25, 30]
    assert budgets(5, 8) == [8]
    assert rel_improvement(None, 1.0) == float("inf")
    assert rel_improvement(1.0, 0.99) == pytest.approx(0.01)
    assert rel_improvement(0.0, 0.0) == 0.0


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(cprime=1)
    with pytest.raises(ValueError):
        TrainConfig(cmax=3)
    with pytest.raises(ValueError):
        TrainConfig(weights_for_ip="p1")
    with pytest.raises(ValueError):
        TrainConfig(delta=0.6)
    with pytest.raises(ValueError):
        TrainConfig(divergence="tv")
    d = TrainConfig()
    assert (d.cprime, d.cmax, d.rho, d.divergence, d.patience, d.improve_thresh, d.ip_time) == \
        (5, 30, 0.05, "chi2", 20, 0.005, 600.0)
    assert (d.pricing_time, d.colgen_time, d.colgen_iters, d.weights_for_ip) == (30.0, 300.0, 5, "p0")


def test_train_separable_toy():
    ds = separable_toy()
    m = train(ds, TrainConfig(patience=3))
    assert (m.predict(ds.X) == ds.y).all()
    assert m.complexity <= 5 + 1
    assert m.train_objective == pytest.approx(0.0, abs=1e-12)
    assert m.outer_iterations == 4  # first iteration plus three stalls


def test_train_budgets_and_determinism():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 2, (50, 8)).astype(np.uint8)
    y = ((X[:, 0] & X[:, 1]) | (X[:, 2] & X[:, 3]) | X[:, 5] & X[:, 6]).astype(int)
    y[rng.random(50) < 0.15] ^= 1
    ds = make(X, y)
    cfg = TrainConfig(patience=4, cmax=15)
    a = train(ds, cfg)
    b = train(ds, cfg)
    assert a.to_json() == b.to_json()
    assert a.complexity <= 15
    assert all(h.complexity <= 5 for h, _ in a.ensemble.members)
    for rec in a.history:
        assert all(r["complexity"] <= r["C"] for r in rec["inner"])
    back = TrainedModel.from_dict(json.loads(a.to_json()))
    assert back.ensemble == a.ensemble


def test_train_pn_weights_accepted():
    ds = separable_toy()
    m = train(ds, TrainConfig(patience=2, weights_for_ip="pn"))
    assert m.config["weights_for_ip"] == "pn"


def test_degenerate_labels_give_constant_model():
    X = np.array([[0, 1], [1, 0], [1, 1]], dtype=np.uint8)
    for label in (0, 1):
        ds = make(X, np.full(3, label))
        m = train(ds, TrainConfig())
        assert (m.predict(X) == label).all()
        assert any("degenerate" in f for f in m.flags)


def test_model_file_rejects_garbage():
    with pytest.raises(ValueError):
        TrainedModel.from_dict({"format": "other"})


# ------------------------------------------------------------------ cycling
def test_histogram_bins():
    h = histogram([0.0, 0.5, 1.0, 0.52, 0.49])
    assert h.size == 21 and h.sum() == 5
    assert h[0] == 1 and h[10] == 3 and h[20] == 1


def test_find_modes():
    assert find_modes([5, 1, 0, 4, 0, 1, 6]) == [0, 3, 6]
    assert find_modes([0, 3, 3, 0]) in ([1], [2])
    assert find_modes([1, 2, 3]) == [2]


def test_cycling_one_iteration():
    rng = np.random.default_rng(2)
    X = rng.integers(0, 2, (30, 5)).astype(np.uint8)
    y = rng.integers(0, 2, 30)
    res = cycling_diagnostic(make(X, y), RobustBall(CHI2, 0.05), 5, 1)
    assert len(res.instantaneous) == 1
    inst, avg = res.instantaneous[0], res.average[0]
    assert inst.sum() == 30
    assert avg[0] == inst[0] and avg[-1] == inst[1] and avg[1:-1].sum() == 0
    assert all(set(np.unique(l)) <= {0.0, 1.0} for l in res.losses)


def test_cycling_empty_dataset():
    ds = make(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(EnsembleError):
        cycling_diagnostic(ds, RobustBall(CHI2, 0.05), 5, 3)
