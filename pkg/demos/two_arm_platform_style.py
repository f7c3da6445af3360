"""Two-arm adaptive design with predictive-probability monitoring.

Control and experimental arms enrol in three equal stages.  At interim looks
the trial graduates when the predictive probability of final success reaches
85% and stops for futility when it falls below 10%.  Exact operating
characteristics come from dynamic programming; a Monte Carlo run confirms
them within its standard errors.
"""

from bayestrial.engine import Scenario, TrialDesign, exact_oc, monte_carlo_oc
from bayestrial.probability import BetaParams
from bayestrial.rules import TWO_ARM, FutilityRule, Monitoring, SuccessRule


def main():
    sizes = ((20, 40, 60), (20, 40, 60))
    priors = (BetaParams(1, 1), BetaParams(1, 1))
    design = TrialDesign(sizes, priors, SuccessRule(0.0, 0.95, TWO_ARM),
                         futility=FutilityRule(0.10), monitoring=Monitoring("ppos", 0.85))
    scenarios = [Scenario((0.2, 0.2), label="null"),
                 Scenario((0.4, 0.2), label="effect"),
                 Scenario((0.4, 0.2), drift=(0.0, 0.05, 0.10), label="control drift")]
    for i, sc in enumerate(scenarios):
        ex = exact_oc(design, sc)
        mc = monte_carlo_oc(design, sc, replicates=20000, master_seed=7, scenario_index=i)
        se = mc.standard_errors["reject_prob"]
        print(f"{sc.label:>13}: exact reject {ex.reject_prob:.4f}  "
              f"MC {mc.reject_prob:.4f} (se {se:.4f})  E[N] {sum(ex.expected_sample_size):.1f}")
        print(f"{'':>15}success by look {[round(p, 4) for p in ex.success_by_look]}  "
              f"futility by look {[round(p, 4) for p in ex.failure_by_look]}")


if __name__ == "__main__":
    main()
