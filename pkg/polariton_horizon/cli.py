"""Command-line entry point: ``polariton-horizon --config repro/fig1.conf --stage steady``."""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigParseError, ConfigValidationError, Settings, load_config, settings
from .services.pipeline import STAGES, Pipeline
from .services.storage import ArtifactStore

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

logger = logging.getLogger("polariton_horizon")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polariton-horizon",
        description="Driven-dissipative polariton horizon simulator",
    )
    parser.add_argument("--config", required=True, type=Path, help="run file (TOML)")
    parser.add_argument("--stage", default="all", choices=(*STAGES, "all"),
                        help="stage to run; 'all' runs every stage in order")
    parser.add_argument("--out", default=None, help="output directory (overrides [output])")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes for the sweep")
    parser.add_argument("--seed", type=int, default=None, help="noise seed (overrides the file)")
    parser.add_argument("--overwrite", action="store_true",
                        help="replace stage outputs that already exist")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    return parser


def resolve_workers(requested: Optional[int], env: Settings) -> int:
    """--workers, capped by HORIZON_MAX_WORKERS; otherwise the CPU count."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    if env.max_workers is not None:
        workers = min(workers, env.max_workers)
    return max(1, workers)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(),
                                                         logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
    )

    try:
        config = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigValidationError("seed", "must be non-negative")
        output_dir = args.out
        if output_dir is None and "output" in config.defaulted_fields:
            output_dir = str(Path(settings.output_root) / args.config.stem)
        config = config.with_overrides(seed=args.seed, output_dir=output_dir)
    except (ConfigParseError, ConfigValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    workers = resolve_workers(args.workers, settings)
    config_hash = config.config_hash()
    logger.info(f"Config {args.config} (hash {config_hash[:12]}), output "
                f"{config.output.directory}, {workers} worker(s)")

    stages = STAGES if args.stage == "all" else (args.stage,)
    if args.stage == "all" and config.probe is None:
        stages = tuple(s for s in stages if s not in ("sweep", "fit"))
    try:
        store = ArtifactStore(config.output.directory, config_hash, overwrite=args.overwrite)
        pipeline = Pipeline(config, store, max_workers=workers)
        for stage in stages:
            pipeline.run(stage)
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Stage failed: {type(e).__name__}: {e}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
