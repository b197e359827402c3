#!/usr/bin/env python3
"""Demo: epoch-weighted feature transfer on the linear toy student.

Trains the toy student against a realizable teacher for a few seeds, printing
the transfer-loss trace for the first seed and a one-line summary for each.
Pass ``--show-divergence`` to also demonstrate the blow-up guard at an absurd
learning rate.
"""

import argparse
import sys

from ctxsearch.losses import (
    DistillConfig,
    DistillDivergence,
    distill_train,
    toy_distill_problem,
    weight_schedule,
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--epochs", type=int, default=400)
    ap.add_argument("--lr", type=float, default=0.5)
    ap.add_argument("--trace-every", type=int, default=50)
    ap.add_argument("--show-divergence", action="store_true")
    args = ap.parse_args(argv)

    print("transfer weight schedule:",
          " ".join(f"e{e}={weight_schedule(e):g}" for e in (0, 14, 15, 20, 24, 25, 40)))

    worst = 0.0
    for pos, seed in enumerate(args.seeds):
        cfg = DistillConfig(seed=seed, epochs=args.epochs, lr=args.lr)
        student, teacher, x = toy_distill_problem(cfg)
        result = distill_train(student, teacher, x, cfg.epochs, cfg.lr)
        if pos == 0:
            for e in range(0, cfg.epochs + 1, args.trace_every):
                print(f"  seed {seed} epoch {e:>4}  transfer loss {result.trace[e]:.6f}")
        verdict = "converged" if result.final < cfg.convergence_threshold else "NOT converged"
        print(f"seed {seed}: initial {result.initial:.4f} -> final {result.final:.6f} "
              f"({verdict}, threshold {cfg.convergence_threshold})")
        worst = max(worst, result.final)

    if args.show_divergence:
        cfg = DistillConfig(seed=args.seeds[0], epochs=args.epochs)
        student, teacher, x = toy_distill_problem(cfg)
        try:
            distill_train(student, teacher, x, cfg.epochs, lr=1e6)
            print("lr=1e6: unexpectedly stable", file=sys.stderr)
            return 1
        except DistillDivergence as exc:
            print(f"lr=1e6: diverged as expected at epoch {exc.epoch}")

    return 0 if worst < DistillConfig(seed=0).convergence_threshold else 1


if __name__ == "__main__":
    sys.exit(main())
