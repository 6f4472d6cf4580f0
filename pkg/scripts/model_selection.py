"""How often does the rule-implied staging win a Bayes-factor comparison?

Simulates datasets from the bundled migration model and scores the rule
staging against the saturated staging and every admissible coarsening.

    python scripts/model_selection.py --seeds 20 --n 250 500 1000 --ess 1
"""

import argparse
from collections import Counter

from abmceg import example_path, load_abm
from abmceg.event_tree import build_tree
from abmceg.inference import PriorConfig, compare_models
from abmceg.simulate import SimConfig, simulate
from abmceg.staging import derive_staging, enumerate_coarsenings, saturated_staging


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default=example_path())
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000])
    ap.add_argument("--ess", type=float, default=1.0)
    args = ap.parse_args()

    spec = load_abm(args.model)
    tree = build_tree(spec)
    rules = derive_staging(spec, tree)
    candidates = enumerate_coarsenings(rules, 100) + [saturated_staging(tree)]
    print(f"{len(candidates)} candidate stagings, ess={args.ess}")
    print("n\trules_wins\tmost_frequent_winner")
    for n in args.n:
        winners = Counter()
        for seed in range(args.seeds):
            data = simulate(spec, SimConfig(n, seed))
            winners[compare_models(candidates, data, PriorConfig(args.ess)).best.staging] += 1
        top, count = winners.most_common(1)[0]
        print(f"{n}\t{winners[rules.name]}/{args.seeds}\t{top} ({count})")


if __name__ == "__main__":
    main()
