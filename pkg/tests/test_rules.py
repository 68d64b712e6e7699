import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drrules.rules import (
    Conjunction, Ensemble, RuleError, RuleSet, accuracy, complexity, dnf_loss, eval_conjunction,
    eval_ruleset, margin_loss, margin_loss_from_scores, parse_ensemble_text, predict, threshold,
)


def test_conjunction_eval():
    t = Conjunction([(0, 1), (2, 0)])
    assert eval_conjunction(t, [1, 1, 0]) == 1
    assert eval_conjunction(Conjunction([(0, 1)]), [0, 1, 1]) == 0


def test_conjunction_validation():
    with pytest.raises(RuleError):
        Conjunction([])
    with pytest.raises(RuleError):
        Conjunction([(1, 1), (1, 0)])
    with pytest.raises(RuleError):
        Conjunction([(0, 2)])
    with pytest.raises(RuleError):
        eval_conjunction(Conjunction([(5, 1)]), [1, 0])


def test_loan_example():
    # features: 0 = #loans>=7, 1 = #loans<=5, 2 = amount>=10000
    high = Conjunction([(0, 1)])
    h = RuleSet([high, Conjunction([(1, 1), (2, 1)])])
    assert eval_conjunction(high, [1, 0, 0]) == 1
    assert eval_ruleset(h, [1, 0, 0]) == 1
    assert eval_ruleset(h, [0, 1, 1]) == 1
    assert eval_ruleset(h, [0, 1, 0]) == 0
    assert eval_ruleset(h, [0, 0, 1]) == 0


def test_ruleset_eval():
    h = RuleSet([Conjunction([(0, 1)]), Conjunction([(1, 1)])])
    assert eval_ruleset(h, [0, 1]) == 1
    assert eval_ruleset(RuleSet(), [0, 1]) == 0


def test_duplicate_conjunction_rejected():
    with pytest.raises(RuleError):
        RuleSet([Conjunction([(0, 1)]), Conjunction([(0, 1)])])


def test_ensemble_predict_ties_and_thresholds():
    h1 = RuleSet([Conjunction([(0, 1)])])
    h2 = RuleSet([Conjunction([(1, 1)])])
    x = np.array([1, 0])
    assert predict(Ensemble([(h1, 0.5), (h2, 0.5)]), x) == 1
    assert predict(Ensemble([(h2, 1.0)]), x) == 0
    assert predict(Ensemble([(h1, 0.2), (h2, 0.8)]), x) == 0


def test_threshold_round_off():
    assert threshold(0.3 + 0.2) == 1
    assert threshold(0.5 - 1e-6) == 0


def test_ensemble_weights_validated_and_pruned():
    h = RuleSet([Conjunction([(0, 1)])])
    g = RuleSet([Conjunction([(1, 1)])])
    with pytest.raises(RuleError):
        Ensemble([(h, 0.5), (g, 0.4)])
    e = Ensemble([(h, 1.0), (g, 0.0)])
    assert len(e) == 1 and e.complexity == 2
    e = Ensemble([(h, 2.0), (g, 2.0)], normalize=True)
    np.testing.assert_allclose(e.weights, [0.5, 0.5])


def test_dnf_loss():
    assert dnf_loss(1, 1) == 0
    assert dnf_loss(1, 0) == 1
    assert dnf_loss(0, 1) == 1


def test_margin_loss_values():
    assert margin_loss_from_scores(1.0, 0) == 0.5
    assert margin_loss_from_scores(0.5, 0) == 0.0
    assert margin_loss_from_scores(0.75, 1) == 0.0
    h = RuleSet([Conjunction([(0, 1)])])
    assert margin_loss(Ensemble([(h, 1.0)]), [1, 0], 0) == 0.5


def test_complexities():
    h1 = RuleSet([Conjunction([(0, 1), (1, 1)])])
    assert complexity(h1) == 3
    h2 = RuleSet([Conjunction([(0, 1), (1, 1)]), Conjunction([(2, 1), (3, 0), (4, 1)])])
    assert complexity(h2) == 7
    e = Ensemble([(h2, 0.5), (RuleSet([Conjunction([(5, 1), (6, 1)]),
                                       Conjunction([(7, 1), (8, 0), (9, 1)])]), 0.5)])
    assert complexity(e) == 14
    e2 = Ensemble([(h1, 0.5), (h2, 0.5)])
    assert complexity(e2) == 10


def test_text_format_and_parse():
    h1 = RuleSet([Conjunction([(12, 1), (40, 0)])])
    h2 = RuleSet([Conjunction([(3, 1)]), Conjunction([(4, 1), (5, 1)])])
    e = Ensemble([(h1, 0.25), (h2, 0.75)])
    text = e.format()
    assert "w=0.25 : (f12=1 AND f40=0)" in text.splitlines()
    back = parse_ensemble_text(text)
    assert back == e
    names = [f"x{j}" for j in range(41)]
    assert "w=0.25 : (x12 AND NOT x40)" in e.format(names)


def test_json_roundtrip_and_errors():
    e = Ensemble([(RuleSet([Conjunction([(1, 1)])]), 0.4), (RuleSet(), 0.6)])
    assert Ensemble.from_json(e.to_json()) == e
    with pytest.raises(RuleError):
        Ensemble.from_json("{not json")
    with pytest.raises(RuleError):
        Ensemble.from_dict({"members": [{"weight": 1.0}]})


lits = st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=1, max_size=4,
                unique_by=lambda t: t[0])
rulesets = st.lists(lits, max_size=4, unique_by=lambda l: tuple(sorted(l))).map(
    lambda ls: RuleSet(Conjunction(l) for l in ls))
rows = st.lists(st.integers(0, 1), min_size=6, max_size=6)


@settings(max_examples=200, deadline=None)
@given(rulesets, rows)
def test_ruleset_is_max_over_rules(h, x):
    expect = max([eval_conjunction(t, x) for t in h.rules], default=0)
    assert eval_ruleset(h, x) == expect


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(rulesets, st.floats(0.01, 1.0)), min_size=1, max_size=4),
       st.lists(rows, min_size=1, max_size=10), st.lists(st.integers(0, 1), min_size=10, max_size=10))
def test_margin_loss_properties(members, X, y):
    total = sum(w for _, w in members)
    e = Ensemble([(h, w / total) for h, w in members], normalize=True)
    X = np.array(X)
    y = np.array(y[: len(X)])
    F = e.score(X)
    ml = margin_loss(e, X, y)
    assert np.all((ml >= 0) & (ml <= 0.5))
    zero = (e.predict(X) == y) | (np.abs(F - 0.5) <= 1e-12)
    np.testing.assert_array_equal(ml <= 1e-12, zero)
    assert e.complexity <= sum(h.complexity for h, _ in members)


@settings(max_examples=100, deadline=None)
@given(rulesets, st.lists(rows, min_size=1, max_size=12), st.data())
def test_expected_dnf_loss_is_misclassification_probability(h, X, data):
    X = np.array(X)
    y = np.array(data.draw(st.lists(st.integers(0, 1), min_size=len(X), max_size=len(X))))
    w = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=len(X), max_size=len(X)))) + 1e-3
    P = w / w.sum()
    pred = h.evaluate(X)
    assert float(P @ dnf_loss(pred, y)) == pytest.approx(float(P[pred != y].sum()))


def test_equal_weight_complexity_bound():
    hs = [RuleSet([Conjunction([(j, 1), (j + 1, 1)])]) for j in range(0, 8, 2)]
    e = Ensemble([(h, 0.25) for h in hs])
    assert e.complexity <= len(hs) * 5


def test_accuracy():
    assert accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
