"""Reactive vs proactive control across the bundled scenarios and several
seeds. Prints per-slice violation ticks and accrued penalty.

    python3 scripts/pcs_sweep.py --seeds 0 1 2 3
"""

import argparse
import time

from cogslice.pcs import BUNDLED_SCRIPTS, EnvConfig, LoopConfig, load_script, run_loop
from cogslice.pcs.training import build_deployment


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--scenarios", nargs="+", default=list(BUNDLED_SCRIPTS))
    args = ap.parse_args()

    env = EnvConfig()
    t0 = time.perf_counter()
    dep = build_deployment(env, LoopConfig())
    print(f"deployment built in {time.perf_counter() - t0:.1f} s\n")
    slices = list(env.specs)
    print(f"{'scenario':<12} {'seed':>4}  " + "  ".join(f"{s + ' r/p':>14}" for s in slices) + f"  {'penalty r/p':>15}  {'final model':<12}")
    wins = total = 0
    for name in args.scenarios:
        script = load_script(name)
        for seed in args.seeds:
            runs = {}
            for ctl in ("reactive", "proactive"):
                runs[ctl] = run_loop(env, LoopConfig(controller=ctl), script, seed=seed, models=dep.models, model_id=dep.model_id, cluster=dep.cluster)
            r, p = runs["reactive"].ledger, runs["proactive"].ledger
            cells = "  ".join(f"{r.violations(s):>6}/{p.violations(s):<7}" for s in slices)
            pen = lambda led: sum(v.accrued_penalty for v in led.slices.values())
            print(f"{name:<12} {seed:>4}  {cells}  {pen(r):>7.0f}/{pen(p):<7.0f}  {runs['proactive'].final_model:<12}")
            top = slices[0]
            total += 1
            wins += p.violations(top) <= r.violations(top)
    print(f"\nproactive <= reactive on {slices[0]}: {wins}/{total}")


if __name__ == "__main__":
    main()
