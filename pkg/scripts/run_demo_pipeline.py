"""Run the whole pipeline end to end on the synthetic demo corpus.

Creates a workspace, ingests the demo captions, scores, clusters, samples
groups, generates with the mock backend, filters, and reports stats:

    python3 scripts/run_demo_pipeline.py --workspace /tmp/demo

The defaults are sized so the run finishes in seconds; pass --rows and
--count to scale it up.
"""

import argparse
import sys
from pathlib import Path

from chatloom.cli import main as chatloom


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", type=Path, required=True)
    parser.add_argument("--rows", type=int, default=200, help="demo corpus size")
    parser.add_argument("--count", type=int, default=30, help="image groups to sample")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--kmeans-k", type=int, default=6)
    parser.add_argument("--min-cluster-size", type=int, default=8)
    args = parser.parse_args(argv)

    ws = str(args.workspace)
    seed = str(args.seed)
    steps = [
        [
            "init", ws, "--demo", str(args.rows), "--seed", seed,
            "--set", f"kmeans_k={args.kmeans_k}",
            "--set", f"min_cluster_size={args.min_cluster_size}",
            "--set", "deterministic=true",
        ],
        ["ingest", ws],
        ["score", ws],
        ["cluster", ws, "--seed", seed],
        ["sample", ws, "--count", str(args.count), "--seed", seed],
        ["generate", ws, "--seed", seed],
        ["parse", ws],
        ["filter", ws],
        ["stats", ws],
        ["export", ws],
        ["verify", ws],
    ]
    for argv_step in steps:
        code = chatloom(argv_step)
        if code != 0:
            print(f"step failed ({code}): {' '.join(argv_step)}", file=sys.stderr)
            return code
    print(f"\ndemo pipeline complete; dataset at {args.workspace / 'dataset.jsonl'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
