import itertools
import math

import numpy as np
import pytest
from scipy import integrate, stats

from bayestrial.exceptions import BudgetExceededError
from bayestrial.probability import (BetaMixture, BetaParams, BinomialSummary,
                                    GridDensity, update_beta)
from bayestrial.rules import (Decision, DecisionKind, FutilityRule, InterimState,
                              LossSpec, Monitoring, SuccessRule, conditional_power,
                              effect_prob_two_arm, evaluate_interim, evidence,
                              expected_losses, loss_threshold, posterior_success, ppos)


def brute_ppos_one_arm(a0, b0, y, n, m, threshold, cutoff):
    """Enumerate the m remaining outcomes with closed-form Beta-Binomial weights."""
    a, b = a0 + y, b0 + n - y
    total = 0.0
    for k in range(m + 1):
        w = stats.betabinom.pmf(k, m, a, b)
        ev = stats.beta.sf(threshold, a0 + y + k, b0 + n + m - y - k)
        total += w * (ev >= cutoff)
    return total


# --- effect_prob_two_arm --------------------------------------------------------

def test_two_arm_identical_posteriors():
    for p in (BetaParams(3, 7), BetaParams(0.5, 0.5), BetaParams(40, 12)):
        assert effect_prob_two_arm(p, p, 0.0) == pytest.approx(0.5, abs=1e-8)


def test_two_arm_separated():
    assert effect_prob_two_arm(BetaParams(1000, 1), BetaParams(1, 1000), 0.5) > 0.99


def test_two_arm_against_monte_carlo():
    rng = np.random.default_rng(20261015)
    n = 1_000_000
    hits = (rng.beta(9, 3, n) - rng.beta(4, 8, n)) > 0.2
    mc = hits.mean()
    se = math.sqrt(mc * (1 - mc) / n)
    val = effect_prob_two_arm(BetaParams(9, 3), BetaParams(4, 8), 0.2)
    assert abs(val - mc) <= 3 * se


def test_two_arm_against_scipy_quad():
    for t, c, a in [((9, 3), (4, 8), 0.2), ((2.5, 30), (1.5, 40), -0.05), ((60, 40), (55, 45), 0.1)]:
        ref, _ = integrate.quad(lambda x: stats.beta.pdf(x, *c) * stats.beta.sf(x + a, *t),
                                0, 1, epsabs=1e-12, limit=200)
        assert effect_prob_two_arm(BetaParams(*t), BetaParams(*c), a) == pytest.approx(ref, abs=1e-8)


@pytest.mark.parametrize("a", [-0.3, 0.0, 0.15])
def test_two_arm_complement(a):
    t, c = BetaParams(7, 5), BetaParams(3, 9)
    p_gt = effect_prob_two_arm(t, c, a)
    # Pr(p_t - p_c < a) = Pr(p_c - p_t > -a)
    p_lt = effect_prob_two_arm(c, t, -a)
    assert p_gt + p_lt == pytest.approx(1.0, abs=2e-8)


def test_two_arm_mixture_equals_pairwise_sum():
    mt = BetaMixture(((0.3, BetaParams(2, 6)), (0.7, BetaParams(8, 4))))
    mc = BetaMixture(((0.6, BetaParams(3, 3)), (0.4, BetaParams(1, 5))))
    pairwise = sum(wt * wc * effect_prob_two_arm(pt, pc, 0.05)
                   for wt, pt in mt.components for wc, pc in mc.components)
    assert effect_prob_two_arm(mt, mc, 0.05) == pytest.approx(pairwise, abs=2e-8)


def test_two_arm_grid_close_to_beta():
    grid_c = GridDensity.from_prior(BetaParams(4, 8), 4001)
    exact = effect_prob_two_arm(BetaParams(9, 3), BetaParams(4, 8), 0.2)
    assert effect_prob_two_arm(BetaParams(9, 3), grid_c, 0.2) == pytest.approx(exact, abs=1e-5)


# --- posterior_success ---------------------------------------------------------

def test_posterior_success_examples():
    rule = SuccessRule(0.5, 0.6)
    assert posterior_success((BetaParams(1, 1),), rule) == (False, pytest.approx(0.5))
    assert posterior_success(0.97, SuccessRule(0.5, 0.95))[0] is True
    ok, ev = posterior_success(BetaParams(4, 8), SuccessRule(0.5, 0.1))
    assert ok and ev == pytest.approx(0.11328125, abs=1e-12)


def test_rule_validation():
    with pytest.raises(ValueError):
        SuccessRule(0.3, 1.5)
    with pytest.raises(ValueError):
        SuccessRule(-0.2, 0.9)
    SuccessRule(-0.2, 0.9, "two-arm")
    with pytest.raises(ValueError):
        FutilityRule(1.0)
    with pytest.raises(ValueError):
        LossSpec(0, 1)


# --- ppos -------------------------------------------------------------------------

def test_ppos_degenerate():
    rule = SuccessRule(0.3, 0.9)
    done = InterimState(((8, 10),), 0, ((10,),))
    fail = InterimState(((1, 10),), 0, ((10,),))
    assert ppos(done, BetaParams(1, 1), rule) == 1.0
    assert ppos(fail, BetaParams(1, 1), rule) == 0.0


def test_ppos_brute_force():
    rule = SuccessRule(0.3, 0.9)
    state = InterimState(((5, 10),), 0, ((10, 20),))
    expected = brute_ppos_one_arm(1, 1, 5, 10, 10, 0.3, 0.9)
    assert ppos(state, BetaParams(1, 1), rule) == pytest.approx(expected, abs=1e-13)
    assert 0 < expected < 1


@pytest.mark.parametrize("y", range(0, 13))
def test_ppos_brute_force_sweep(y):
    rule = SuccessRule(0.25, 0.8)
    state = InterimState(((y, 12),), 0, ((12, 30),))
    expected = brute_ppos_one_arm(0.5, 1.5, y, 12, 18, 0.25, 0.8)
    assert ppos(state, BetaParams(0.5, 1.5), rule) == pytest.approx(expected, abs=1e-13)


def test_ppos_monotone_in_successes():
    rule = SuccessRule(0.3, 0.9)
    for n in range(1, 16):
        vals = [ppos(InterimState(((y, n),), 0, ((n, 20),)), BetaParams(1, 1), rule)
                for y in range(n + 1)]
        assert all(b >= a - 1e-13 for a, b in zip(vals, vals[1:]))


def test_ppos_two_arm_brute_force():
    rule = SuccessRule(0.0, 0.9, "two-arm")
    priors = (BetaParams(1, 1), BetaParams(1, 1))
    state = InterimState(((4, 8), (3, 8)), 0, ((8, 14), (8, 13)))
    total = 0.0
    for kt, kc in itertools.product(range(7), range(6)):
        w = stats.betabinom.pmf(kt, 6, 5, 5) * stats.betabinom.pmf(kc, 5, 4, 6)
        ev = effect_prob_two_arm(BetaParams(5 + kt, 5 + 6 - kt), BetaParams(4 + kc, 6 + 5 - kc), 0.0)
        total += w * (ev >= 0.9)
    assert ppos(state, priors, rule) == pytest.approx(total, abs=1e-12)


def test_ppos_budget():
    rule = SuccessRule(0.0, 0.9, "two-arm")
    state = InterimState(((0, 0), (0, 0)), 0, ((0, 60), (0, 60)))
    with pytest.raises(BudgetExceededError, match="enumeration budget exceeded"):
        ppos(state, (BetaParams(1, 1), BetaParams(1, 1)), rule, budget=100)


def test_ppos_tower_property():
    rule = SuccessRule(0.3, 0.85)
    prior = BetaParams(1, 1)
    schedule = ((6, 12, 20),)
    for y in range(7):
        now = ppos(InterimState(((y, 6),), 0, schedule), prior, rule)
        post = update_beta(prior, BinomialSummary(y, 6))
        pred = post.predictive_pmf(6)
        nxt = sum(pred[k] * ppos(InterimState(((y + k, 12),), 1, schedule), prior, rule)
                  for k in range(7))
        assert nxt == pytest.approx(now, abs=1e-10)


# --- conditional power ------------------------------------------------------------

def test_conditional_power():
    state = InterimState(((5, 10),), 0, ((10, 20),))
    assert conditional_power(state, (0.5,), 4) == 1.0
    assert conditional_power(state, (0.5,), 12) == pytest.approx(176 / 1024, abs=1e-15)
    assert conditional_power(state, (0.0,), 12) == 0.0
    assert conditional_power(state, (0.9,), 16) == 0.0


def test_conditional_power_two_arm_brute_force():
    state = InterimState(((6, 10), (4, 10)), 0, ((10, 15), (10, 14)))
    expected = sum(stats.binom.pmf(kt, 5, 0.6) * stats.binom.pmf(kc, 4, 0.4)
                   for kt in range(6) for kc in range(5) if (6 + kt) - (4 + kc) >= 4)
    assert conditional_power(state, (0.6, 0.4), 4) == pytest.approx(expected, abs=1e-14)


# --- loss threshold ----------------------------------------------------------------

def test_loss_threshold_values():
    assert loss_threshold(LossSpec(1, 1)) == 0.5
    assert loss_threshold(LossSpec(19, 1)) == pytest.approx(0.95)
    assert loss_threshold(LossSpec(9, 1)) == pytest.approx(0.9)
    succ, fail = expected_losses(0.91, LossSpec(9, 1))
    assert succ == pytest.approx(0.81) and fail == pytest.approx(0.91)
    assert succ < fail


@pytest.mark.parametrize("fp,fn", [(9, 1), (1, 1), (3, 7), (19, 1)])
def test_loss_threshold_is_bayes_optimal(fp, fn):
    spec = LossSpec(fp, fn)
    c = loss_threshold(spec)
    for ev in np.arange(0, 1.0005, 0.001):
        succ, fail = expected_losses(ev, spec)
        chosen = succ if ev >= c else fail
        assert chosen <= min(succ, fail) + 1e-12


# --- evaluate_interim ----------------------------------------------------------------

def test_evaluate_interim_efficacy():
    rule = SuccessRule(0.3, 0.95)
    state = InterimState(((14, 20),), 0, ((20, 40),))
    d = evaluate_interim(state, BetaParams(1, 1), rule)
    ev = evidence(BetaParams(15, 7), rule)
    assert ev > 0.95
    assert d == Decision(DecisionKind.STOP_EFFICACY, pytest.approx(ev))


def test_evaluate_interim_futility():
    rule = SuccessRule(0.3, 0.95)
    state = InterimState(((3, 20),), 0, ((20, 40),))
    pp = ppos(state, BetaParams(1, 1), rule)
    assert pp < 0.10
    d = evaluate_interim(state, BetaParams(1, 1), rule, FutilityRule(0.10))
    assert d.kind is DecisionKind.STOP_FUTILITY
    assert d.evidence == pytest.approx(pp)


def test_evaluate_interim_continue_and_final():
    rule = SuccessRule(0.3, 0.95)
    mid = InterimState(((8, 20),), 0, ((20, 40),))
    assert evaluate_interim(mid, BetaParams(1, 1), rule, FutilityRule(0.10)).kind \
        is DecisionKind.CONTINUE
    final = InterimState(((14, 40),), 1, ((20, 40),))
    d = evaluate_interim(final, BetaParams(1, 1), rule)
    assert d.kind is DecisionKind.FINAL_FAILURE and d.evidence < 0.95


def test_evaluate_interim_ppos_monitoring():
    rule = SuccessRule(0.3, 0.95)
    state = InterimState(((13, 20),), 0, ((20, 40),))
    pp = ppos(state, BetaParams(1, 1), rule)
    d = evaluate_interim(state, BetaParams(1, 1), rule, FutilityRule(0.10), Monitoring("ppos", 0.85))
    assert d.kind is (DecisionKind.STOP_EFFICACY if pp >= 0.85 else DecisionKind.CONTINUE)
    assert d.evidence == pytest.approx(pp)


def test_inconsistent_state_rejected():
    with pytest.raises(ValueError):
        InterimState(((3, 19),), 0, ((20, 40),))
    with pytest.raises(ValueError):
        InterimState(((3, 20),), 2, ((20, 40),))


def test_optional_stopping_coherence():
    rng = np.random.default_rng(3)
    rule = SuccessRule(0.3, 0.9)
    prior = BetaParams(0.7, 1.3)
    for _ in range(50):
        n = rng.integers(5, 40)
        y = rng.binomial(n, 0.4)
        path = prior
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(3, n - 1), replace=False))
        bounds = [0, *cuts, n]
        outcomes = np.array([1] * y + [0] * (n - y))
        rng.shuffle(outcomes)
        for lo, hi in zip(bounds, bounds[1:]):
            path = update_beta(path, BinomialSummary(int(outcomes[lo:hi].sum()), int(hi - lo)))
        batch = update_beta(prior, BinomialSummary(int(y), int(n)))
        assert posterior_success(path, rule)[1] == pytest.approx(posterior_success(batch, rule)[1],
                                                                 abs=1e-12)
