#!/usr/bin/env python3
"""Run the shipped reproduction configs end to end."""

import argparse
import sys
from pathlib import Path

from dotenv import load_dotenv

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from polariton_horizon.cli import EXIT_OK, main as run_cli

load_dotenv()

REPRO_DIR = Path(__file__).parent.parent / "repro"
TARGETS = ("fig1", "fig2", "nosupport", "gamma0-check")


def main() -> int:
    parser = argparse.ArgumentParser(description="Reproduce the horizon scattering runs")
    parser.add_argument(
        "targets",
        nargs="*",
        default=list(TARGETS),
        choices=TARGETS,
        help="configs under repro/ to run (default: all)"
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes for the probe sweeps"
    )
    parser.add_argument(
        "--overwrite",
        action="store_true",
        help="replace results from earlier runs"
    )
    args = parser.parse_args()

    failed = []
    for target in args.targets:
        print(f"\n▶️  {target}")
        print("=" * 50)
        argv = ["--config", str(REPRO_DIR / f"{target}.conf")]
        if args.workers is not None:
            argv += ["--workers", str(args.workers)]
        if args.overwrite:
            argv.append("--overwrite")
        code = run_cli(argv)
        if code != EXIT_OK:
            failed.append((target, code))
            print(f"❌ {target} exited with code {code}")
        else:
            print(f"✅ {target} done")

    print("-" * 50)
    print(f"Targets run: {len(args.targets)}, failed: {len(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
