import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bayestrial.dosefinding import (CrmSpec, DoseToxState, EscalationDecision as E,
                                    EscalationDesign, MtpiSpec, boin_boundaries, boin_decide,
                                    crm_means, crm_recommend, decision_table, escalation_oc,
                                    mtpi_decide, mtpi_upms, overdose_eliminate, pava, rule_3p3,
                                    rule_i3p3, select_mtd, simulate_escalation)

SKELETON = (0.05, 0.12, 0.25, 0.40)


def at(n, y, n_doses=3):
    return DoseToxState.single(n, y, n_doses)


# --- 3+3 and i3+3 ------------------------------------------------------------------

@pytest.mark.parametrize("n,y,expected", [
    (3, 0, E.ESCALATE), (3, 1, E.STAY), (3, 2, E.DEESCALATE), (3, 3, E.DEESCALATE),
    (6, 0, E.ESCALATE), (6, 1, E.ESCALATE), (6, 2, E.DEESCALATE), (6, 4, E.DEESCALATE)])
def test_rule_3p3_table(n, y, expected):
    assert rule_3p3(at(n, y)) is expected


@pytest.mark.parametrize("n", [0, 2, 4, 9])
def test_rule_3p3_undefined(n):
    with pytest.raises(ValueError, match="3\\+3 undefined"):
        rule_3p3(at(n, 0))


@pytest.mark.parametrize("y,expected", [(0, E.ESCALATE), (1, E.STAY), (2, E.DEESCALATE),
                                        (3, E.DEESCALATE)])
def test_rule_i3p3_three_patients(y, expected):
    assert rule_i3p3(at(3, y), 0.25, 0.2, 0.3) is expected


def test_rule_i3p3_published_rows():
    # rows of the published table for target 0.3, EI [0.25, 0.35]
    expect = {6: {0: E.ESCALATE, 1: E.ESCALATE, 2: E.STAY, 3: E.DEESCALATE},
              9: {2: E.ESCALATE, 3: E.STAY, 4: E.DEESCALATE}}
    for n, row in expect.items():
        for y, d in row.items():
            assert rule_i3p3(at(n, y), 0.3, 0.25, 0.35) is d


def test_rule_i3p3_requires_patients():
    with pytest.raises(ValueError):
        rule_i3p3(DoseToxState.empty(3), 0.25, 0.2, 0.3)


# --- BOIN ---------------------------------------------------------------------------

def test_boin_default_boundaries():
    b = boin_boundaries(0.30)
    assert b.phi1 == pytest.approx(0.18) and b.phi2 == pytest.approx(0.42)
    assert b.lambda_e == pytest.approx(0.236, abs=1e-3)
    assert b.lambda_d == pytest.approx(0.358, abs=1e-3)


def test_boin_boundaries_limit():
    b = boin_boundaries(0.3, 0.3 - 1e-6, 0.3 + 1e-6)
    assert b.lambda_e == pytest.approx(0.3, abs=1e-5)
    assert b.lambda_d == pytest.approx(0.3, abs=1e-5)


@pytest.mark.parametrize("phi", [0.1, 0.2, 0.25, 0.3, 0.4, 0.5])
def test_boin_boundary_ordering(phi):
    b = boin_boundaries(phi)
    assert b.lambda_e < phi < b.lambda_d


def test_boin_decisions():
    b = boin_boundaries(0.3)
    assert boin_decide(at(3, 0), b) is E.ESCALATE
    assert boin_decide(at(3, 1), b) is E.STAY
    assert boin_decide(at(3, 2), b) is E.DEESCALATE


def test_boin_escalation_guard():
    b = boin_boundaries(0.3)
    top = DoseToxState((0, 3), (0, 0), current_dose=1)
    assert boin_decide(top, b) is E.STAY
    blocked = DoseToxState((3, 0), (0, 0), 0, (False, True))
    assert boin_decide(blocked, b) is E.STAY


@pytest.mark.parametrize("phi", [0.2, 0.25, 0.3])
def test_boin_contiguity(phi):
    b = boin_boundaries(phi)
    order = {E.ESCALATE: 0, E.STAY: 1, E.DEESCALATE: 2}
    for n in range(1, 31):
        seq = [order[boin_decide(at(n, y), b)] for y in range(n + 1)]
        assert seq == sorted(seq)


# --- mTPI ---------------------------------------------------------------------------

def upm_oracle(a, b, phi=0.3, eps=0.05):
    """UPMs from the polynomial Beta cdf via the binomial identity."""
    def cdf(x):
        n = a + b - 1
        return sum(math.comb(n, j) * x**j * (1 - x) ** (n - j) for j in range(a, n + 1))
    lo, hi = phi - eps, phi + eps
    return (cdf(lo) / lo, (cdf(hi) - cdf(lo)) / (hi - lo), (1 - cdf(hi)) / (1 - hi))


@pytest.mark.parametrize("y,expected,published", [
    (0, E.ESCALATE, (2.734, 1.379, 0.275)),
    (1, E.STAY, (1.047, 1.753, 0.866)),
    (2, E.DEESCALATE, (0.203, 0.757, 1.344))])
def test_mtpi_trio(y, expected, published):
    spec = MtpiSpec(0.3)
    upm, _ = mtpi_upms(at(3, y), spec)
    np.testing.assert_allclose(upm, upm_oracle(1 + y, 4 - y), atol=1e-6)
    np.testing.assert_allclose(upm, published, atol=5e-4)
    assert mtpi_decide(at(3, y), spec) is expected


def test_mtpi2_intervals_cover_unit_interval():
    ivs = MtpiSpec(0.3, variant="mtpi2").intervals()
    assert ivs[0][0] == 0.0 and ivs[-1][1] == 1.0
    for (a, b, _), (c, d, _) in zip(ivs, ivs[1:]):
        assert b == pytest.approx(c)
    inner = [b - a for a, b, _ in ivs[1:-1]]
    np.testing.assert_allclose(inner, 0.1, atol=1e-12)


def test_mtpi2_upms_against_scipy():
    spec = MtpiSpec(0.3, variant="mtpi2")
    upm, kinds = mtpi_upms(at(6, 2), spec)
    for (lo, hi, _), u in zip(spec.intervals(), upm):
        mass = stats.beta.cdf(hi, 3, 5) - stats.beta.cdf(lo, 3, 5)
        assert u == pytest.approx(mass / (hi - lo), abs=1e-10)


@pytest.mark.parametrize("variant", ["mtpi", "mtpi2"])
def test_mtpi_contiguity(variant):
    spec = MtpiSpec(0.3, variant=variant)
    order = {E.ESCALATE: 0, E.STAY: 1, E.DEESCALATE: 2}
    for n in range(1, 13):
        seq = [order[mtpi_decide(at(n, y), spec)] for y in range(n + 1)]
        assert seq == sorted(seq), (n, seq)


# --- CRM ------------------------------------------------------------------------------

def test_crm_prior_means_against_fine_grid():
    spec = CrmSpec(SKELETON, 0.25)
    means = crm_means(DoseToxState.empty(4), spec)
    a = np.linspace(-4, 4, 8001)
    w = stats.norm.pdf(a, 0, 1.34)
    w /= w.sum()
    oracle = np.array([(w * q ** np.exp(a)).sum() for q in SKELETON])
    np.testing.assert_allclose(means, oracle, atol=1e-4)
    dose, _ = crm_recommend(DoseToxState.empty(4), CrmSpec(SKELETON, 0.25, no_skip=False))
    assert dose == int(np.argmin(np.abs(oracle - 0.25)))


def test_crm_tie_goes_to_lower_dose():
    state = DoseToxState((3, 3, 0, 0), (0, 1, 0, 0), current_dose=1)
    means = crm_means(state, CrmSpec(SKELETON, 0.25))
    target = (means[1] + means[2]) / 2
    dose, _ = crm_recommend(state, CrmSpec(SKELETON, target, no_skip=False))
    assert dose == 1


def test_crm_no_skip():
    state = DoseToxState((3, 0, 0, 0), (0, 0, 0, 0), current_dose=0)
    dose, means = crm_recommend(state, CrmSpec(SKELETON, 0.6))
    assert dose == 1
    free, _ = crm_recommend(state, CrmSpec(SKELETON, 0.6, no_skip=False))
    assert free == 3


def test_crm_rejects_bad_skeleton():
    with pytest.raises(ValueError):
        CrmSpec((0.1, 0.1, 0.3), 0.25)


states = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=4, max_size=4).map(
    lambda rows: DoseToxState(tuple(n for n, _ in rows), tuple(min(y, n) for n, y in rows)))


@settings(max_examples=100, deadline=None)
@given(states, st.integers(0, 3))
def test_crm_monotone_in_dlts(state, j):
    spec = CrmSpec(SKELETON, 0.25)
    before = crm_means(state, spec)
    more_dlt = crm_means(state.add(j, 1, 1), spec)
    more_ok = crm_means(state.add(j, 1, 0), spec)
    assert np.all(more_dlt >= before - 1e-10)
    assert np.all(more_ok <= before + 1e-10)


# --- overdose rule ----------------------------------------------------------------

def test_overdose_closed_forms():
    three = DoseToxState((3, 0, 0), (3, 0, 0))
    assert overdose_eliminate(three, 0.3, 0.95) == (True, True, True)
    assert BetaOracle(4, 1, 0.3) == pytest.approx(1 - 0.3**4)
    none = DoseToxState((3, 0, 0), (0, 0, 0))
    assert overdose_eliminate(none, 0.3, 0.95) == (False, False, False)
    assert BetaOracle(1, 4, 0.3) == pytest.approx(0.7**4)


def BetaOracle(a, b, x):
    return stats.beta.sf(x, a, b)


def test_overdose_needs_three_patients():
    assert overdose_eliminate(DoseToxState((2, 0), (2, 0)), 0.3, 0.5) == (False, False)


def test_overdose_flags_absorbing():
    st_ = DoseToxState((6, 3), (0, 0), 0, (False, True))
    assert overdose_eliminate(st_, 0.3, 0.95) == (False, True)
    hit = DoseToxState((3, 3, 0), (0, 3, 0))
    assert overdose_eliminate(hit, 0.3, 0.95) == (False, True, True)


# --- MTD selection ------------------------------------------------------------------

def test_pava_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        v = rng.random(5)
        w = rng.random(5) + 0.1
        iso = pava(v, w)
        assert np.all(np.diff(iso) >= -1e-15)
        # weighted mean preserved
        assert (iso * w).sum() == pytest.approx((v * w).sum())


def test_select_mtd_smoothed_estimates():
    state = DoseToxState((3, 6, 9, 3), (0, 1, 3, 2))
    # smoothed estimates (0.05+y)/(0.1+n) are already increasing here
    assert select_mtd(state, 0.3) == 2
    assert select_mtd(DoseToxState.empty(3), 0.3) is None


def test_select_mtd_ignores_eliminated_and_untried():
    state = DoseToxState((3, 6, 3, 0), (0, 1, 3, 0), 1, (False, False, True, True))
    assert select_mtd(state, 0.3) == 1


# --- simulation ----------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["3+3", "i3+3", "boin", "mtpi", "mtpi2", "crm"])
def test_no_toxicity_ends_at_top_dose(kind):
    crm = CrmSpec(SKELETON, 0.3) if kind == "crm" else None
    design = EscalationDesign(kind, 0.3, 4, max_n=30, crm=crm)
    res = simulate_escalation(design, (0.0,) * 4, 1)
    assert res.mtd == 3
    assert sum(res.dlts) == 0


def test_certain_toxicity_stops_trial():
    design = EscalationDesign("boin", 0.3, 4)
    res = simulate_escalation(design, (1.0,) * 4, 1)
    assert res.stopped_early and res.mtd is None
    assert res.treated == (3, 0, 0, 0)


def test_3p3_certain_toxicity():
    res = simulate_escalation(EscalationDesign("3+3", 0.3, 4), (1.0,) * 4, 1)
    assert res.mtd is None and res.stopped_early


@pytest.mark.parametrize("kind", ["3+3", "boin", "mtpi2", "crm"])
def test_simulation_invariants(kind):
    crm = CrmSpec(SKELETON, 0.3) if kind == "crm" else None
    design = EscalationDesign(kind, 0.3, 4, cohort_size=3, max_n=24, crm=crm)
    for r in range(40):
        res = simulate_escalation(design, (0.1, 0.25, 0.4, 0.6), 7, r)
        assert res.total_treated <= 24
        doses = [d for d, _, _ in res.path]
        assert all(b - a <= 1 for a, b in zip(doses, doses[1:]))
        assert res == simulate_escalation(design, (0.1, 0.25, 0.4, 0.6), 7, r)
        if res.mtd is not None:
            assert not res.eliminated[res.mtd]


def test_never_assigns_eliminated_dose():
    design = EscalationDesign("boin", 0.3, 4, max_n=36, elimination_cutoff=0.8)
    for r in range(60):
        res = simulate_escalation(design, (0.2, 0.5, 0.7, 0.8), 3, r)
        state = DoseToxState.empty(4)
        for dose, size, y in res.path:
            assert not state.eliminated[dose]
            state = state.add(dose, size, y)
            state = DoseToxState(state.treated, state.dlts, 0,
                                 overdose_eliminate(state, 0.3, 0.8))
        assert state.eliminated == res.eliminated


def test_escalation_oc_worker_invariance():
    design = EscalationDesign("boin", 0.3, 4, max_n=18)
    runs = [escalation_oc(design, (0.05, 0.15, 0.3, 0.5), 300, 5, workers=w) for w in (1, 3)]
    assert runs[0] == runs[1]
    assert math.fsum(runs[0].selection) + runs[0].no_selection == pytest.approx(1.0)


def test_max_n_validated():
    with pytest.raises(ValueError):
        EscalationDesign("boin", 0.3, 4, max_n=0)


# --- decision tables -------------------------------------------------------------------

def test_boin_decision_table_shape():
    rows = decision_table(EscalationDesign("boin", 0.3, 4), 12)
    assert len(rows) == sum(n + 1 for n in range(1, 13))
    assert rows[0][:3] == (1, 0, "Escalate")
    assert {r[2] for r in rows} <= {"Escalate", "Stay", "DeEscalate"}
    assert any(r[3] for r in rows)


def test_crm_has_no_decision_table():
    with pytest.raises(ValueError):
        decision_table(EscalationDesign("crm", 0.3, 4, crm=CrmSpec(SKELETON, 0.3)), 6)


def test_boin_selects_true_mtd_most_often():
    design = EscalationDesign("boin", 0.3, 4, cohort_size=3, max_n=30)
    oc = escalation_oc(design, (0.05, 0.15, 0.30, 0.50), 10_000, 2024, workers=4)
    sel = oc.selection
    assert all(sel[2] > sel[j] for j in (0, 1, 3)), sel
