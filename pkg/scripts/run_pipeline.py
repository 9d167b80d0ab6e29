"""Generate a synthetic trace, train the four regressors plus the combination,
and print the comparison table.

    python3 scripts/run_pipeline.py --seed 0 --samples 6000 --out /tmp/kb
"""

import argparse
import time

from cogslice.ingest import CorruptionSpec, GeneratorConfig, default_scenarios
from cogslice.models import TrainConfig
from cogslice.pipeline import PipelineConfig, run_pipeline


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=6000, help="rows per mobility scenario")
    ap.add_argument("--spike-probability", type=float, default=0.02)
    ap.add_argument("--forest-trees", type=int, default=100)
    ap.add_argument("--gbt-trees", type=int, default=100)
    ap.add_argument("--step", type=int, default=1, help="weight grid step (percent)")
    ap.add_argument("--out", help="persist every artifact into a knowledge base here")
    args = ap.parse_args()

    cfg = PipelineConfig(
        generator=GeneratorConfig(
            seed=args.seed,
            scenarios=default_scenarios(samples=args.samples),
            corruption=CorruptionSpec(spike_probability=args.spike_probability),
        ),
        train=TrainConfig(seed=args.seed, forest_trees=args.forest_trees, gbt_trees=args.gbt_trees),
        combine_step=args.step,
    )
    t0 = time.perf_counter()
    res = run_pipeline(cfg, args.out)
    print(f"rows: {res.processed.row_count} (train {res.train.n}, validation {res.validation.n})")
    print(f"features: {', '.join(res.feature_set.base_features)}")
    print(f"repaired cells: {len(res.report.cells)}")
    print()
    print(res.comparison.table())
    if res.weights is not None:
        print(f"\nweights (lasso, enet, forest, gbt): {tuple(res.weights.weights)}")
    print(f"verdict: {res.comparison.verdict}")
    for r in res.comparison.reasons:
        print(f"  {r}")
    print(f"\n{time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
