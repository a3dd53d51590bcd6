"""Bias and spread of the fitted class probabilities over repeated simulated datasets.

    python3 scripts/simulation_study.py --reps 100 --n 1000 --error-dist normal
    python3 scripts/simulation_study.py --reps 100 --all-dists --restriction shared-means
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from intercause.datagen import ERROR_DISTS
from intercause.em import FitConfig, Restriction
from intercause.experiments import simulation_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--error-dist", choices=ERROR_DISTS, default="normal")
    ap.add_argument("--all-dists", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-starts", type=int, default=10)
    ap.add_argument("--restriction", choices=[r.value for r in Restriction], default="none")
    ap.add_argument("--warm-start", action="store_true")
    ap.add_argument("--n-jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    cfg = FitConfig(n_starts=args.n_starts, warm_start=args.warm_start)
    dists = ERROR_DISTS if args.all_dists else (args.error_dist,)
    results = {}
    for dist in dists:
        res = simulation_study(args.reps, args.n, dist, args.seed, cfg, args.n_jobs, args.restriction)
        cells = "  ".join(f"{b:+.2f} ({s:.2f})" for _, b, s in res.table())
        print(f"{dist:10s} {cells}   [{res.n_failed} failed, {res.seconds:.0f} s]")
        results[dist] = {
            "truth": res.truth.tolist(),
            "bias_x100": (100 * res.bias).tolist(),
            "se_x100": (100 * res.se).tolist(),
            "n_failed": res.n_failed,
        }
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps({"config": vars(args) | {"out": str(args.out)}, "results": results}, indent=2))


if __name__ == "__main__":
    main()
