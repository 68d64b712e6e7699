import math

import pytest

from drrules.bounds import (
    BoundError, BoundInputs, delta_m, lambda_m, log_size_lower, log_size_upper, prop1_gap,
    prop2_ingredients, report, size_bounds,
)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_size_bounds_recomputed():
    for d in (3, 10, 50):
        for C in (2, 3, 5, 10):
            if 2 * d <= C - 1:
                continue
            lo, hi = size_bounds(d, C)
            assert rel(lo, (C - 1) * (math.log(2 * d) - math.log(C - 1))) < 1e-12
            assert rel(hi, (C - 1) * (1 + math.log(2 * d) - math.log(C - 1))) < 1e-12
            assert lo < hi


def test_size_lower_exact_at_two():
    # complexity 2 means one single-literal rule: exactly 2d of them
    for d in (1, 4, 17):
        assert log_size_lower(d, 2) == pytest.approx(math.log(2 * d), rel=1e-15)


def test_upper_bound_constant():
    assert log_size_upper(10, 5, V=math.e) == pytest.approx(log_size_upper(10, 5) + 1)
    with pytest.raises(BoundError):
        log_size_upper(10, 5, V=0)


def test_uniform_gap_recomputed_and_monotone():
    g = prop1_gap(BoundInputs(N=100, d=10, C=5, delta=0.05))
    expect = math.sqrt(2 / 100 * (4 * math.log(20 / 4) + math.log(20)))
    assert rel(g, expect) < 1e-12
    Ns = [prop1_gap(BoundInputs(N=n, d=10, C=5)) for n in (10, 100, 1000, 10000)]
    assert all(b < a for a, b in zip(Ns, Ns[1:]))
    ds = [prop1_gap(BoundInputs(N=100, d=d, C=5)) for d in (3, 10, 30)]
    assert all(b > a for a, b in zip(ds, ds[1:]))
    deltas = [prop1_gap(BoundInputs(N=100, d=10, C=5, delta=x)) for x in (0.2, 0.1, 0.05, 0.01)]
    assert all(b > a for a, b in zip(deltas, deltas[1:]))


def test_uniform_gap_scales_as_inverse_sqrt_n():
    a = prop1_gap(BoundInputs(N=100, d=10, C=5))
    b = prop1_gap(BoundInputs(N=400, d=10, C=5))
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_ensemble_sample_count_and_deviation():
    p = prop2_ingredients(BoundInputs(N=1000, d=10, C=19, delta=0.05, margin=0.5, cprime=5))
    logH = 4 * math.log(5)
    assert p.log_H == pytest.approx(logH, rel=1e-12)
    assert p.M_real == pytest.approx(16 * math.log(1000 / logH), rel=1e-12)
    assert p.M == math.ceil(p.M_real) == 81
    dm = 0.05 * (1 / 81 - 1 / 82)
    assert p.delta_M == pytest.approx(dm, rel=1e-12)
    lam = math.sqrt((math.log(82) + 81 * logH - math.log(dm)) / 2000)
    assert p.lambda_M == pytest.approx(lam, rel=1e-12)
    assert p.lambda_M == pytest.approx(0.51849, abs=1e-5)


def test_halving_margin_quadruples_sample_count():
    a = prop2_ingredients(BoundInputs(N=1000, d=10, C=5, margin=0.5))
    b = prop2_ingredients(BoundInputs(N=1000, d=10, C=5, margin=0.25))
    assert b.M_real == pytest.approx(4 * a.M_real, rel=1e-12)


def test_lambda_increases_with_m():
    logH = log_size_lower(10, 5)
    vals = [lambda_m(1000, M, logH, 0.05) for M in range(1, 40)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert delta_m(0.05, 1) == pytest.approx(0.025)


def test_validation():
    for kw in ({"C": 1}, {"d": 2, "C": 6}, {"delta": 0.0}, {"delta": 1.0}, {"margin": 0.0},
               {"N": 0}, {"cprime": 1}):
        args = {"N": 100, "d": 10, "C": 5}
        args.update(kw)
        with pytest.raises(BoundError):
            BoundInputs(**args)
    with pytest.raises(BoundError):
        prop2_ingredients(BoundInputs(N=5, d=10, C=5))


def test_report():
    r = report(299, 60, 30, 5)
    assert r["prop1_gap_cprime"] == pytest.approx(prop1_gap(BoundInputs(299, 60, 5)))
    assert r["M"] is not None and r["lambda_M"] > 0
    assert r["log_H_cprime_lower"] < r["log_H_cprime_upper"]
    assert "error" in report(100, 2, 30, 5)
    assert report(3, 10, 5, 5)["M"] is None
