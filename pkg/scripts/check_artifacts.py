#!/usr/bin/env python3
"""Check which stages of a run directory are complete and still valid."""

import argparse
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from polariton_horizon.config import ConfigParseError, ConfigValidationError, load_config
from polariton_horizon.services.pipeline import STAGES
from polariton_horizon.services.storage import ArtifactStore, MissingUpstreamArtifact


def main() -> int:
    """Report the checkpoint status of every stage."""
    parser = argparse.ArgumentParser(description="Stage checkpoint status")
    parser.add_argument("--config", required=True, type=Path, help="run file the outputs belong to")
    parser.add_argument("--out", default=None, help="output directory (overrides [output])")
    args = parser.parse_args()

    try:
        config = load_config(args.config).with_overrides(output_dir=args.out)
    except (ConfigParseError, ConfigValidationError) as e:
        print(f"❌ {e}")
        return 2

    print("🔍 STAGE CHECKPOINTS")
    print("=" * 50)
    print(f"Output: {config.output.directory}")
    store = ArtifactStore(config.output.directory, config.config_hash())

    complete = 0
    for stage in STAGES:
        try:
            manifest = store.require(stage)
        except MissingUpstreamArtifact as e:
            print(f"⬜ {stage}: {e.reason}")
            continue
        complete += 1
        inputs = ", ".join(manifest.get("inputs", [])) or "none"
        print(f"✅ {stage}: {len(manifest.get('files', []))} file(s), "
              f"finished {manifest.get('finished')}, inputs {inputs}")

    print("-" * 50)
    print(f"Stages complete: {complete}/{len(STAGES)}")
    if complete < len(STAGES):
        print("\n⚠️  Corrupt manifests are backed up with a .backup suffix; rerun the")
        print("   affected stage with --overwrite to rebuild it.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
