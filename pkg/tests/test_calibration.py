import numpy as np
import pytest
from scipy import stats

from bayestrial.calibration import (AssuranceProblem, CalibrationProblem, calibrate_assurance,
                                    calibrate_cutoff, exact_gs_boundaries, type_one_error)
from bayestrial.engine import (DesignPrior, Scenario, TrialDesign, bayesian_oc, exact_oc,
                               one_arm_design)
from bayestrial.exceptions import CalibrationError
from bayestrial.probability import BetaParams
from bayestrial.rules import SuccessRule


def tail_critical(n, p, alpha):
    """Smallest y* with P(Bin(n, p) >= y*) <= alpha, by exhaustive enumeration."""
    for y in range(n + 2):
        if stats.binom.sf(y - 1, n, p) <= alpha:
            return y


def closed_form_evidence(y, n, a):
    """Pr(theta > a | y of n) under Beta(1,1): the binomial-tail identity P(Bin(n+1, a) <= y)."""
    return stats.binom.cdf(y, n + 1, a)


def test_single_look_certificate_matches_tail_oracle():
    design = one_arm_design((20,), threshold=0.3, cutoff=0.5)
    cert = calibrate_cutoff(CalibrationProblem(design, Scenario((0.3,)), 0.025))
    y_star = tail_critical(20, 0.3, 0.025)
    assert y_star == 11
    assert cert.critical_counts == (11,)
    assert cert.type_one_error == pytest.approx(stats.binom.sf(10, 20, 0.3), abs=1e-13)
    assert cert.type_one_error <= 0.025 < cert.previous_type_one_error
    assert cert.previous_cutoff == pytest.approx(cert.cutoff - 1e-4, abs=1e-12)
    # the cutoff sits between the closed-form evidence of y*-1 and y*
    assert closed_form_evidence(10, 20, 0.3) < cert.cutoff <= closed_form_evidence(11, 20, 0.3)
    assert cert.previous_cutoff < closed_form_evidence(11, 20, 0.3)


def test_slack_alpha_gives_smallest_grid_value():
    design = one_arm_design((20,), threshold=0.6, cutoff=0.5)
    cert = calibrate_cutoff(CalibrationProblem(design, Scenario((0.3,)), 0.999))
    assert cert.cutoff == 1e-4
    assert cert.previous_cutoff is None


def test_discreteness_makes_alpha_unattainable():
    design = one_arm_design((2,), threshold=0.3, cutoff=0.5)
    with pytest.raises(CalibrationError, match="alpha unattainable"):
        calibrate_cutoff(CalibrationProblem(design, Scenario((0.3,)), 0.001))


def test_type_one_error_monotone_in_cutoff():
    design = one_arm_design((10, 20, 30), threshold=0.3, cutoff=0.5)
    null = Scenario((0.3,))
    errs = [type_one_error(design, null, c) for c in np.arange(0.5, 1.0, 0.01)]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_multi_look_certificate_is_exact():
    design = one_arm_design((10, 20, 30), threshold=0.3, cutoff=0.5)
    null = Scenario((0.3,))
    cert = calibrate_cutoff(CalibrationProblem(design, null, 0.05))
    assert exact_oc(design.with_cutoff(cert.cutoff), null).reject_prob == cert.type_one_error
    assert cert.type_one_error <= 0.05
    assert exact_oc(design.with_cutoff(cert.previous_cutoff), null).reject_prob > 0.05


def test_power_at_null_equals_type_one_error():
    design = one_arm_design((25,), threshold=0.3, cutoff=0.5)
    null = Scenario((0.3,))
    cert = calibrate_cutoff(CalibrationProblem(design, null, 0.05))
    assert exact_oc(design.with_cutoff(cert.cutoff), null).reject_prob == cert.type_one_error


def test_problem_validation():
    design = one_arm_design((20,))
    with pytest.raises(ValueError):
        CalibrationProblem(design, Scenario((0.3,)), 0.0)
    with pytest.raises(ValueError):
        CalibrationProblem(design, Scenario((0.3,)), 0.05, cutoff_grid_step=0.0)


# --- assurance --------------------------------------------------------------------

def family(n):
    return one_arm_design((int(n),), threshold=0.3, cutoff=0.9)


def test_slack_target_returns_smallest_n():
    dp = DesignPrior.point(Scenario((0.6,)))
    res = calibrate_assurance(AssuranceProblem(family, dp, 0.1, tuple(range(20, 201, 5))))
    assert res.value == 20


def test_target_one_is_unattainable():
    dp = DesignPrior.point(Scenario((0.5,)))
    with pytest.raises(CalibrationError) as err:
        calibrate_assurance(AssuranceProblem(family, dp, 1.0, (20, 40, 60)))
    assert err.value.best is not None


def test_beta_design_prior_bracketing_certificate():
    dp = DesignPrior.from_beta(BetaParams(8, 12), control_rate=0.2)

    def two_arm(n):
        priors = (BetaParams(1, 1), BetaParams(1, 1))
        return TrialDesign(((int(n),), (int(n),)), priors, SuccessRule(0.0, 0.8, "two-arm"))

    vals = tuple(range(20, 61, 5))
    res = calibrate_assurance(AssuranceProblem(two_arm, dp, 0.8, vals))
    assert res.assurance >= 0.8
    assert bayesian_oc(two_arm(res.value), dp).assurance == res.assurance
    if res.value > vals[0]:
        assert bayesian_oc(two_arm(res.value - 5), dp).assurance < 0.8


def test_one_arm_beta_design_prior_minimal_n():
    dp = DesignPrior.from_beta(BetaParams(8, 12))
    res = calibrate_assurance(AssuranceProblem(
        lambda n: one_arm_design((int(n),), threshold=0.25, cutoff=0.8), dp, 0.8,
        tuple(range(20, 201, 5))))
    assert res.assurance >= 0.8
    assert res.neighbour is None or res.neighbour_assurance < 0.8


def test_cutoff_search_returns_largest_cutoff():
    dp = DesignPrior.point(Scenario((0.5,)))
    cuts = tuple(np.round(np.arange(0.5, 0.995, 0.01), 4))
    res = calibrate_assurance(AssuranceProblem(
        lambda c: one_arm_design((30,), threshold=0.3, cutoff=float(c)), dp, 0.8, cuts, "cutoff"))
    assert res.assurance >= 0.8
    assert res.neighbour_assurance < 0.8
    assert res.monotone


# --- group-sequential boundaries ----------------------------------------------------

def test_single_look_boundary_matches_cutoff_calibration():
    gs = exact_gs_boundaries((20,), 0.025, (1.0,), 0.3)
    assert gs.critical_counts == (tail_critical(20, 0.3, 0.025),) == (11,)
    design = one_arm_design((20,), threshold=0.3, cutoff=0.5)
    cert = calibrate_cutoff(CalibrationProblem(design, Scenario((0.3,)), 0.025))
    assert cert.critical_counts == gs.critical_counts


def test_degenerate_spending_has_no_interim_stop():
    gs = exact_gs_boundaries((10, 20, 30), 0.05, (0.0, 0.0, 1.0), 0.3)
    assert gs.critical_counts[:2] == (11, 21)
    assert gs.critical_counts[2] == tail_critical(30, 0.3, 0.05)


def enumerate_first_look(n1, b1, p):
    return stats.binom.sf(b1 - 1, n1, p)


def test_half_spending_at_first_look():
    gs = exact_gs_boundaries((15, 30), 0.025, (0.5, 1.0), 0.3)
    first = enumerate_first_look(15, gs.critical_counts[0], 0.3)
    assert first <= 0.0125
    assert gs.cumulative_rejection[0] == pytest.approx(first, abs=1e-14)
    # overall exact error by direct enumeration over both increments
    b1, b2 = gs.critical_counts
    total = first
    for y1 in range(b1):
        for y2 in range(16):
            if y1 + y2 >= b2:
                total += stats.binom.pmf(y1, 15, 0.3) * stats.binom.pmf(y2, 15, 0.3)
    assert gs.type_one_error == pytest.approx(total, abs=1e-13)
    assert total <= 0.025


def test_boundaries_never_overspend():
    for fr in [(0.2, 0.5, 1.0), (0.33, 0.67, 1.0), (0.1, 0.1, 1.0)]:
        gs = exact_gs_boundaries((12, 24, 36), 0.05, fr, 0.25)
        for cum, lim in zip(gs.cumulative_rejection, gs.spending_limits):
            assert cum <= lim + 1e-15


def test_infeasible_final_spending():
    with pytest.raises(CalibrationError):
        exact_gs_boundaries((2,), 0.001, (1.0,), 0.3)


def test_spending_validation():
    with pytest.raises(ValueError):
        exact_gs_boundaries((10, 20), 0.05, (0.6, 0.5), 0.3)
