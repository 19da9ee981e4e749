"""
cdeh/main.py
Command-line entry point: `python -m cdeh --mode train|eval|sweep ...`
"""

from __future__ import annotations

import sys
from typing import Optional, Sequence

from loguru import logger

from cdeh.controllers.experiment_controller import parse_args, parse_spec, run
from cdeh.core.logging import configure_logging
from cdeh.utils.exceptions import handle_exception
from cdeh.utils.provenance import build_version


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    try:
        configure_logging(args.log_level, args.out / "run.log")
        spec = parse_spec(args)
        logger.info(f"cdeh {build_version()} | mode={spec.mode} | out={spec.out}")
        summary = run(spec)
        for path in summary.artifacts:
            logger.info(f"wrote {path}")
        return 0
    except (Exception, KeyboardInterrupt) as exc:
        return handle_exception(exc)


if __name__ == "__main__":
    sys.exit(main())
