"""Borrow control-arm information from historical studies.

Three priors built from the same historical data behave differently when the
current trial disagrees with history.  A power prior borrows a fixed share,
a robust MAP prior lets its vague component take over, and a commensurate
prior spreads its mass according to a grid of commensurability precisions.
"""

from bayestrial.borrowing import (CommensurateSpec, HistoricalData, PowerPriorSpec,
                                  RobustMixSpec, commensurate_prior, map_prior, power_prior,
                                  robustify, summarize)
from bayestrial.probability import BetaParams, BinomialSummary, posterior, prob_exceeds


def describe(name, prior, current):
    post = posterior(prior, current)
    s = summarize(prior)
    print(f"{name:>13}: prior mean {s.mean:.3f}  ESS {s.ess:7.1f}  "
          f"posterior mean {post.mean:.3f}  Pr(rate > 0.3) {prob_exceeds(post, 0.3):.3f}")
    return post


def main():
    hist = HistoricalData(((20, 100), (25, 110), (18, 95)))
    pooled = hist.pooled
    priors = {
        "power 0.5": power_prior(PowerPriorSpec(0.5), hist),
        "MAP": map_prior(hist),
        "robust MAP": robustify(map_prior(hist), RobustMixSpec(0.8)),
        "commensurate": commensurate_prior(
            BetaParams(1 + pooled.successes, 1 + pooled.failures),
            CommensurateSpec((1.0, 10.0, 100.0))),
    }
    for label, current in (("agreeing", BinomialSummary(12, 60)),
                           ("conflicting", BinomialSummary(27, 60))):
        print(f"current data {current.successes}/{current.trials} ({label})")
        for name, prior in priors.items():
            post = describe(name, prior, current)
            if name == "robust MAP":
                print(f"{'':>15}vague weight after update {post.components[-1][0]:.3f}")
        print()


if __name__ == "__main__":
    main()
