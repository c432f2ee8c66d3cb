import csv
import io
import math
from fractions import Fraction
from functools import lru_cache

import pytest

from qrbackup import analysis
from qrbackup.analysis import (
    AdversaryModel,
    AnalysisParams,
    attack_success_approx,
    attack_success_exact,
    binom,
    combined_failure,
    comparison_table,
    default_params,
    optimal_threshold,
    recovery_unreliability,
    scenario_success_probability,
    simulate_attack,
)
from qrbackup.errors import ParameterError

DEF = default_params()


def walk_oracle(N, n, k, p1, q1, q3):
    """Exact success probability of the random contact walk, by recursion on
    (trustees left, regular contacts left, fooled so far)."""
    p1, q1, q3 = Fraction(p1), Fraction(q1), Fraction(q3)

    @lru_cache(maxsize=None)
    def f(t, r, fooled):
        if fooled == k:
            return Fraction(1)
        if t + r == 0:
            return Fraction(0)
        out = Fraction(0)
        if t:
            out += Fraction(t, t + r) * (q3 * f(t - 1, r, fooled + 1) + q1 * f(t - 1, r, fooled))
        if r:
            out += Fraction(r, t + r) * p1 * f(t, r - 1, fooled)
        return out

    return f(n, N - n, 0)


def formula_oracle(N, n, k, p1, q1, q3):
    """Scenario sum evaluated term by term with exact integer binomials."""
    p1, q1, q3 = Fraction(p1), Fraction(q1), Fraction(q3)
    total = Fraction(0)
    for i in range(k, n + 1):
        for j in range(N - n + 1):
            total += (math.comb(i - 1 + j, j) * math.comb(N - i - j, n - i) * p1 ** j
                      * math.comb(i - 1, i - k) * q3 ** k * q1 ** (i - k))
    return total / math.comb(N, n)


def model(N, p1=0.5, q1=0.25, q3=0.5, p_steal=1.0):
    return AdversaryModel(N, p_steal, p1, 1 - p1, q1, 1 - q1 - q3, q3)


def test_default_params():
    m = DEF.model
    assert m.contacts_N == 404
    assert m.p_steal == 0.00274
    assert m.q3 == 0.45
    assert m.q1 == pytest.approx(0.275, abs=1e-15) and m.q2 == pytest.approx(0.275, abs=1e-15)
    assert m.p1 == 0.45
    assert DEF.unavailability_U == 0.001


@pytest.mark.parametrize("kwargs", [
    dict(p1=0.5, p2=0.4),
    dict(q1=0.3),
    dict(p_steal=1.5),
    dict(contacts_N=0),
])
def test_model_validation(kwargs):
    base = dict(contacts_N=10, p_steal=1.0, p1=0.5, p2=0.5, q1=0.25, q2=0.25, q3=0.5)
    base.update(kwargs)
    with pytest.raises(ParameterError):
        AdversaryModel(**base)
    with pytest.raises(ParameterError):
        AnalysisParams(DEF.model, 1.2)


def test_binom_against_lgamma():
    for n in range(0, 405, 13):
        for k in range(0, min(n, 12) + 1):
            log_c = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
            assert binom(n, k) == pytest.approx(math.exp(log_c), rel=1e-10)
            assert binom(n, k) == pytest.approx(math.comb(n, k), rel=1e-13)
    assert binom(404, 8) == pytest.approx(math.comb(404, 8), rel=1e-13)
    assert binom(3, 5) == 0.0


def test_scenario_collapses_at_first_term():
    m, k, n = DEF.model, 3, 5
    expected = binom(m.contacts_N - k, n - k) / binom(m.contacts_N, n) * m.q3 ** k
    assert scenario_success_probability(DEF, k, n, k, 0) == pytest.approx(expected, rel=1e-14)


def test_scenario_zero_when_nobody_fooled():
    m = model(20, q3=0.0, q1=0.5)
    assert all(scenario_success_probability(m, 2, 4, i, j) == 0.0 for i in range(2, 5) for j in range(17))


def test_scenario_all_contacts_are_trustees():
    m = model(5, p1=0.45, q1=0.275, q3=0.45)
    total = sum(scenario_success_probability(m, 3, 5, i, 0) for i in range(3, 6))
    hand = 0.45 ** 3 * (1 + 3 * 0.275 + 6 * 0.275 ** 2)
    assert total == pytest.approx(hand, rel=1e-13)
    assert round(hand, 6) == 0.207651


def test_scenario_range_errors():
    with pytest.raises(ParameterError):
        scenario_success_probability(DEF, 3, 5, 2, 0)
    with pytest.raises(ParameterError):
        scenario_success_probability(DEF, 3, 5, 3, 400)


def test_exact_p_steal_zero():
    assert attack_success_exact(DEF.with_model(p_steal=0.0), 3, 5) == 0.0


def test_exact_direct_escrow_geometry():
    m = model(5, p1=0.45, q1=0.275, q3=0.45)
    assert attack_success_exact(m, 3, 5) == pytest.approx(0.45 ** 3 * (1 + 3 * 0.275 + 6 * 0.275 ** 2), rel=1e-13)


@pytest.mark.parametrize("N", [1, 2, 5, 9, 14])
def test_exact_matches_walk_oracle(N):
    for n in range(1, min(N, 6) + 1):
        for k in range(1, n + 1):
            for p1, q1, q3 in [(0.5, 0.25, 0.5), (0.8, 0.1, 0.3), (0.0, 0.0, 1.0), (1.0, 0.6, 0.4)]:
                want = float(walk_oracle(N, n, k, p1, q1, q3))
                got = attack_success_exact(model(N, p1, q1, q3), k, n)
                assert got == pytest.approx(want, rel=1e-12, abs=1e-300), (N, n, k, p1, q1, q3)


@pytest.mark.parametrize("n,k", [(5, 3), (6, 3), (3, 1), (8, 5)])
def test_exact_matches_integer_formula_at_defaults(n, k):
    m = DEF.model
    want = m.p_steal * float(formula_oracle(m.contacts_N, n, k, m.p1, m.q1, m.q3))
    assert attack_success_exact(DEF, k, n) == pytest.approx(want, rel=1e-12)


def test_exact_range_errors():
    with pytest.raises(ParameterError):
        attack_success_exact(DEF, 0, 5)
    with pytest.raises(ParameterError):
        attack_success_exact(model(4), 2, 5)


def test_approx_values():
    assert attack_success_approx(DEF, 3, 6) == pytest.approx(8.179e-10, rel=1e-3)
    assert attack_success_approx(DEF, 3, 5) == pytest.approx(4.733e-10, rel=1e-3)
    assert attack_success_approx(DEF, 3, 5) == pytest.approx(0.00274 * (5 * 0.45 / 404) ** 3, rel=1e-14)
    assert attack_success_approx(DEF.with_model(q3=0.0, q1=0.5, q2=0.5), 3, 5) == 0.0


def test_approx_within_order_of_magnitude():
    for n in range(2, 9):
        for k in range(2, n + 1):
            ratio = attack_success_exact(DEF, k, n) / attack_success_approx(DEF, k, n)
            assert 0.1 <= ratio <= 10, (n, k, ratio)


def test_unreliability_values():
    assert recovery_unreliability(0.0, 3, 5) == 0.0
    assert recovery_unreliability(1.0, 3, 5) == 1.0
    hand = 10 * 0.999 ** 2 * 1e-9 + 5 * 0.999 * 1e-12 + 1e-15
    assert recovery_unreliability(0.001, 3, 5) == pytest.approx(hand, rel=1e-14)
    assert recovery_unreliability(0.001, 3, 5) == pytest.approx(9.98501e-9, rel=1e-6)


def test_binomial_identity():
    for n in range(1, 15):
        for U in (0.001, 0.25, 0.5, 0.9):
            total = math.fsum(binom(n, i) * (1 - U) ** (n - i) * U ** i for i in range(n + 1))
            assert total == pytest.approx(1.0, abs=1e-12)
            # k = n covers every outcome except "all available"
            assert recovery_unreliability(U, n, n) == pytest.approx(1 - (1 - U) ** n, abs=1e-12)


def test_combined_failure():
    assert combined_failure(0, 0) == 0
    assert combined_failure(1, 0.3) == 1
    assert combined_failure(0.5, 0.5) == 0.75
    assert combined_failure(0.5, 0.5, approximate=True) == 1.0
    with pytest.raises(ParameterError):
        combined_failure(1.5, 0)


def test_failure_report_identity():
    r = analysis.failure_report(DEF, 3, 5)
    assert r.F == pytest.approx(r.P + r.Q - r.P * r.Q, rel=1e-15)


def test_monotonicity_in_k_and_n():
    for n in range(1, 11):
        P = [attack_success_exact(DEF, k, n) for k in range(1, n + 1)]
        Q = [recovery_unreliability(DEF.unavailability_U, k, n) for k in range(1, n + 1)]
        assert all(a >= b for a, b in zip(P, P[1:]))
        assert all(a <= b for a, b in zip(Q, Q[1:]))
        assert all(0 <= p <= DEF.model.p_steal for p in P)
        assert all(0 <= q <= 1 for q in Q)
    for k in range(1, 11):
        P = [attack_success_exact(DEF, k, n) for n in range(k, 11)]
        assert all(a <= b for a, b in zip(P, P[1:]))


def test_optimal_threshold_defaults():
    opt = optimal_threshold(DEF, 6)
    assert opt.k_star == 3
    assert 1e-9 <= opt.F_min <= 1e-7
    assert [r.k for r in opt.curve] == [1, 2, 3, 4, 5, 6]


def test_optimal_threshold_perfect_trustees():
    params = AnalysisParams(DEF.model, 0.0)
    for n in range(1, 9):
        assert optimal_threshold(params, n).k_star == n


def test_optimal_threshold_ties_prefer_small_k():
    params = AnalysisParams(DEF.model.__class__(10, 0.0, 0.5, 0.5, 0.25, 0.25, 0.5), 0.0)
    assert optimal_threshold(params, 4).k_star == 1


def test_comparison_table():
    t = comparison_table(DEF)
    assert list(t) == list(analysis.APPROACHES)
    assert t["local_storage"].F == pytest.approx(0.0055, abs=0.0002)
    assert t["password"].P == pytest.approx(0.4 * 0.00274)
    assert t["password"].F == pytest.approx(0.0439, abs=0.0005)
    assert 0.05 <= t["biometric"].F <= 0.0505
    assert t["direct_escrow"].F == pytest.approx(0.0831, abs=0.0005)
    assert 0.7e-8 <= t["indirect_permission"].F <= 2.8e-8


def test_simulation_trivial_cases():
    sure = AdversaryModel(3, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    assert simulate_attack(sure, 3, 3, 1000, seed=1).estimate == 1.0
    never = model(10, q3=0.0, q1=0.5)
    assert simulate_attack(never, 2, 4, 1000, seed=1).estimate == 0.0


@pytest.mark.slow
def test_simulation_agrees_with_exact():
    m = model(10, p1=0.5, q1=0.25, q3=0.5)
    res = simulate_attack(m, 2, 4, 10**6, seed=11)
    exact = attack_success_exact(m, 2, 4)
    assert abs(res.estimate - exact) <= 3 * res.std_error


def test_simulation_scales_by_p_steal():
    m = model(8, p_steal=0.5)
    a = simulate_attack(m, 2, 3, 20000, seed=3)
    b = simulate_attack(model(8), 2, 3, 20000, seed=3)
    assert a.successes == b.successes and a.estimate == pytest.approx(0.5 * b.estimate)


def test_simulation_deterministic():
    m = model(12)
    assert simulate_attack(m, 2, 4, 50000, seed=5, workers=3) == simulate_attack(m, 2, 4, 50000, seed=5, workers=3)
    assert simulate_attack(m, 2, 4, 50000, seed=5) == simulate_attack(m, 2, 4, 50000, seed=5)
    assert simulate_attack(m, 2, 4, 50000, seed=5) != simulate_attack(m, 2, 4, 50000, seed=6)


def test_simulation_rejects_zero_trials():
    with pytest.raises(ParameterError):
        simulate_attack(model(5), 1, 2, 0)


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_csv_formats():
    opt = optimal_threshold(DEF, 6)
    rows = _rows(analysis.curve_csv(opt.curve))
    assert rows[0] == ["k", "P", "Q", "F"]
    assert len(rows) == 7
    assert min(rows[1:], key=lambda r: float(r[3]))[0] == "3"
    assert float(rows[3][3]) == opt.F_min

    rows = _rows(analysis.sweep_csv(analysis.optimize_over_n(DEF, range(1, 4))))
    assert rows == [["n", "k_star", "F_min"], ["1", "1", repr(optimal_threshold(DEF, 1).F_min)],
                    ["2", "1", repr(optimal_threshold(DEF, 2).F_min)], ["3", "2", repr(optimal_threshold(DEF, 3).F_min)]]

    rows = _rows(analysis.comparison_csv(comparison_table(DEF)))
    assert rows[0] == ["approach", "P", "Q", "F"]
    assert [r[0] for r in rows[1:]] == list(analysis.APPROACHES)
    assert rows[1] == ["local_storage", "0.00274", "0.00274", "0.00548"]


def test_combined_failure_keeps_tiny_terms():
    assert combined_failure(1e-20, 0.0) == 1e-20
    assert combined_failure(3e-18, 1e-18) == pytest.approx(4e-18, rel=1e-15)
