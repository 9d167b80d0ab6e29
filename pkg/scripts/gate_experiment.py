"""Validation gates on a corrupted trace: without repair, with repair, and
with repair under the sleeping-IoT deployment profile.

    python3 scripts/gate_experiment.py --seed 5
"""

import argparse

from cogslice.ingest import CorruptionSpec, GeneratorConfig
from cogslice.pipeline import PipelineConfig, run_pipeline
from cogslice.preprocess import PreprocessConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--spike-probability", type=float, default=0.02)
    args = ap.parse_args()

    gen = GeneratorConfig(seed=args.seed, corruption=CorruptionSpec(spike_probability=args.spike_probability))
    cases = [
        ("unrepaired", False, None),
        ("repaired", True, None),
        ("repaired, sleeping_iot", True, "sleeping_iot"),
    ]
    for label, repair, profile in cases:
        cfg = PipelineConfig(generator=gen, preprocess=PreprocessConfig(repair_spikes=repair), models=("lasso",), deployment_profile=profile)
        res = run_pipeline(cfg)
        comp = res.comparison
        print(f"== {label}: {comp.verdict}")
        for r in comp.reasons:
            print(f"   {r}")
        print("   top errors (actual, predicted):", ", ".join(f"({e.actual:g}, {e.predicted:.2f})" for e in comp.errors["lasso"]))


if __name__ == "__main__":
    main()
