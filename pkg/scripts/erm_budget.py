"""How biased the ERM head is as a function of its training budget.

The core channel equals the label, so a fully converged linear head is not
biased at all. The bias seen at the default budget is a finite-training
effect: the spurious channel has a larger scale and is picked up first.
"""

import argparse

import numpy as np

from nsf.classifier import ClassifierTrainConfig, train_erm_head
from nsf.evaluate import evaluate
from nsf.synthgen import SyntheticConfig, derive_seed, generate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--steps", default="250,500,1000,1500,3000")
    args = ap.parse_args()
    budgets = [int(s) for s in args.steps.split(",")]
    print(f"{'steps':>6} {'ERM WGA (%)':>14} {'mean acc (%)':>14}")
    for steps in budgets:
        wga, acc = [], []
        for seed in range(args.seeds):
            train = generate(SyntheticConfig(seed=seed))
            test = generate(SyntheticConfig(seed=derive_seed(seed, 1)))
            rep = evaluate(train_erm_head(train, ClassifierTrainConfig(steps=steps, seed=seed)), test)
            wga.append(rep.worst_group_accuracy)
            acc.append(rep.mean_accuracy)
        print(f"{steps:>6} {100 * np.mean(wga):>8.2f} +/- {100 * np.std(wga):<5.2f}"
              f"{100 * np.mean(acc):>8.2f}")


if __name__ == "__main__":
    main()
