"""DQN against the random and monkey baselines over the generated app suite.

Writes one CSV row per session plus a JSON summary with the median screen
coverage per policy, distinct crashes and the paired Wilcoxon test.

    python3 scripts/run_benchmark.py --out results/bench.csv
    python3 scripts/run_benchmark.py --apps 4 --reps 3 --hidden 512 --out results/wide.csv
"""

import argparse
import csv
import dataclasses
import json
import logging
import time
from pathlib import Path

from screenrl import harness
from screenrl.agent import AgentConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--apps", type=int, default=20, help="app seeds 1..N")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--budget", type=int, default=300)
    p.add_argument("--hidden", type=int, default=16, help="Q-network width")
    p.add_argument("--init", default="glorot", choices=("glorot", "he", "lecun"))
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--policies", default="dqn,random,monkey")
    p.add_argument("--encoder-cache", default=None)
    p.add_argument("--out", default="results/bench.csv")
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = harness.RunConfig(budget=a.budget, agent=AgentConfig(hidden=a.hidden, init=a.init, tau=a.tau))
    suite = harness.BenchSuite(app_seeds=tuple(range(1, a.apps + 1)), repetitions=a.reps,
                               policies=tuple(a.policies.split(",")), base=base)
    if a.encoder_cache:
        harness.get_encoder(base.encoder, base.embedding.d_layout, base.encoder_seed, base.encoder_epochs,
                            cache_dir=a.encoder_cache)
    t0 = time.perf_counter()
    rows, summary = harness.bench(suite, progress=lambda r: logging.info(
        "app %2d %-6s rep %d  screens %.3f  transitions %.3f  crashes %d", r["app_seed"], r["policy"], r["rep"],
        r["screen_coverage"], r["transition_coverage"], r["crashes"]))
    summary["seconds"] = round(time.perf_counter() - t0, 1)
    summary["config"] = dataclasses.asdict(base)

    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[k for k in rows[0] if k != "crash_ids"], extrasaction="ignore",
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps({k: summary[k] for k in ("policies", "dqn_vs_random", "seconds") if k in summary}, indent=1))


if __name__ == "__main__":
    main()
