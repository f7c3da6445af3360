"""Calibrate a single-arm two-look design and report its operating characteristics.

A phase II study compares a response rate against a historical 30%.  We pick
the posterior cutoff that keeps the exact type I error at or below 5%, then
look at power under a 50% alternative and at assurance under a Beta design
prior on the true rate.
"""

from bayestrial.calibration import CalibrationProblem, calibrate_cutoff, exact_gs_boundaries
from bayestrial.engine import DesignPrior, Scenario, bayesian_oc, exact_oc, one_arm_design
from bayestrial.probability import BetaParams


def main():
    design = one_arm_design((20, 40), threshold=0.3, cutoff=0.5)
    null, alt = Scenario((0.3,), label="null"), Scenario((0.5,), label="alt")

    cert = calibrate_cutoff(CalibrationProblem(design, null, alpha=0.05))
    print(f"calibrated cutoff {cert.cutoff:.4f}  exact type I error {cert.type_one_error:.5f}")
    print(f"  one grid step lower ({cert.previous_cutoff:.4f}) gives "
          f"{cert.previous_type_one_error:.5f}")
    print(f"  responders needed at each look: {cert.critical_counts}")

    final = design.with_cutoff(cert.cutoff)
    for sc in (null, alt):
        oc = exact_oc(final, sc)
        print(f"{sc.label:>5}: reject {oc.reject_prob:.4f}  E[N] {oc.expected_sample_size[0]:.2f}  "
              f"stop at look 1 {oc.success_by_look[0]:.4f}")

    dp = DesignPrior.from_beta(BetaParams(10, 15))
    boc = bayesian_oc(final, dp)
    print(f"assurance under Beta(10, 15): {boc.assurance:.4f}")

    gs = exact_gs_boundaries((20, 40), 0.05, (0.4, 1.0), 0.3)
    print(f"frequentist boundaries with 40% spent at look 1: {gs.critical_counts} "
          f"(exact error {gs.type_one_error:.5f})")


if __name__ == "__main__":
    main()
