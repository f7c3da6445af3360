"""Compare dose-escalation designs on one toxicity scenario.

Five doses with a target DLT rate of 30%; the third dose is the true MTD.
Each design is simulated with the same master seed, so reruns reproduce the
table exactly.
"""

from bayestrial.dosefinding import CrmSpec, EscalationDesign, decision_table, escalation_oc

TRUTH = (0.05, 0.12, 0.30, 0.45, 0.60)


def main():
    designs = {
        "3+3": EscalationDesign("3+3", 0.3, 5, max_n=30),
        "BOIN": EscalationDesign("boin", 0.3, 5, max_n=30),
        "mTPI-2": EscalationDesign("mtpi2", 0.3, 5, max_n=30),
        "i3+3": EscalationDesign("i3+3", 0.3, 5, max_n=30),
        "CRM": EscalationDesign("crm", 0.3, 5, max_n=30,
                                crm=CrmSpec((0.05, 0.12, 0.25, 0.40, 0.55), 0.3)),
    }
    print("selection probability by dose, true rates", TRUTH)
    for name, design in designs.items():
        oc = escalation_oc(design, TRUTH, replicates=1000, master_seed=2024)
        sel = "  ".join(f"{p:.3f}" for p in oc.selection)
        print(f"{name:>7}: {sel}  none {oc.no_selection:.3f}  "
              f"mean N {sum(oc.mean_treated):.1f}  mean DLT {sum(oc.mean_dlts):.1f}")

    print("\nBOIN decisions for up to 9 patients on a dose")
    for n, y, decision, eliminate in decision_table(designs["BOIN"], 9):
        if n % 3 == 0:
            flag = "  eliminate" if eliminate else ""
            print(f"  n={n} y={y}: {decision}{flag}")


if __name__ == "__main__":
    main()
