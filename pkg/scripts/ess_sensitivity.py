"""Log Bayes factor of the rule staging against alternatives across ess values.

    python scripts/ess_sensitivity.py --n 1000 --seed 0 --grid 0.1 0.5 1 2 5 10 50
"""

import argparse

from abmceg import example_path, load_abm
from abmceg.event_tree import build_tree
from abmceg.inference import PriorConfig, compare_models
from abmceg.simulate import SimConfig, simulate
from abmceg.staging import derive_staging, enumerate_coarsenings, saturated_staging


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default=example_path())
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", type=float, nargs="+", default=[0.1, 0.5, 1, 2, 5, 10, 50])
    args = ap.parse_args()

    spec = load_abm(args.model)
    tree = build_tree(spec)
    rules = derive_staging(spec, tree)
    candidates = enumerate_coarsenings(rules, 100) + [saturated_staging(tree)]
    data = simulate(spec, SimConfig(args.n, args.seed))

    others = [c.name for c in candidates[1:]]
    print("ess\t" + "\t".join(f"lbf vs {o}" for o in others))
    for ess in args.grid:
        comp = compare_models(candidates, data, PriorConfig(ess))
        row = [comp.log_bayes_factor(rules.name, o) for o in others]
        print(f"{ess:g}\t" + "\t".join(f"{x:.3f}" for x in row))


if __name__ == "__main__":
    main()
