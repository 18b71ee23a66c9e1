"""Build a small workspace with a pending annotation batch for UI work.

Runs the demo pipeline far enough to have a corpus and clusters, then
queues one refinement batch so the service has something to annotate:

    python3 scripts/make_ui_fixture.py --workspace /tmp/uifix
    chatloom serve /tmp/uifix --port 8000

The frontend integration tests use this to exercise the service for real.
"""

import argparse
import sys
from pathlib import Path

from chatloom.cli import main as chatloom


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", type=Path, required=True)
    parser.add_argument("--batch", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    ws = str(args.workspace)
    seed = str(args.seed)
    steps = [
        [
            "init", ws, "--demo", "60", "--seed", seed,
            "--set", "kmeans_k=4", "--set", "min_cluster_size=8",
            "--set", "deterministic=true",
        ],
        ["ingest", ws],
        ["score", ws],
        ["cluster", ws, "--seed", seed],
        ["iterate", ws, "--seed", seed, "--batch", str(args.batch)],
    ]
    for argv_step in steps:
        code = chatloom(argv_step)
        if code != 0:
            print(f"step failed ({code}): {' '.join(argv_step)}", file=sys.stderr)
            return code
    print(f"\nfixture ready: {args.batch} conversations pending in {args.workspace}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
