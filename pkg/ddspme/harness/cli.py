import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from ddspme import __version__
from ddspme.common import ConfigError, DdspmeError, ProbeFailure
from ddspme.harness.config import TASKS, require_config, validate
from ddspme.harness.runner import Runner, write_error

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PROBE = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ddspme', description='Distribution dependent stochastic porous media lab')
    parser.add_argument('task', choices=TASKS + ('validate',))
    parser.add_argument('--config', required=True, help='experiment config (JSON)')
    parser.add_argument('--out', default=None, help='output directory, defaults to the config output_dir')
    parser.add_argument('--strict', action='store_true', help='fail with exit 4 when an assumption probe fails')
    parser.add_argument('--threads', type=int, default=None, help='worker threads, falls back to DDSPME_THREADS')
    parser.add_argument('--verbose', action='store_true')
    parser.add_argument('--version', action='version', version=F"%(prog)s {__version__}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    if args.task == 'validate':
        violations = validate(args.config)
        print(json.dumps({'config': args.config, 'violations': violations}, indent=2))
        return EXIT_CONFIG if violations else EXIT_OK

    try:
        config = require_config(args.config)
    except ConfigError as e:
        LOGGER.error('invalid config %s: %s', args.config, e)
        write_error(args.out or 'out', e)
        return EXIT_CONFIG

    try:
        Runner(config, out_dir=args.out, strict=args.strict, threads=args.threads).run(args.task)
    except ProbeFailure as e:
        LOGGER.error('%s', e)
        return EXIT_PROBE
    except (ConfigError, ValidationError) as e:
        LOGGER.error('%s', e)
        return EXIT_CONFIG
    except DdspmeError as e:
        LOGGER.error('numerical abort: %s %s', e, e.diagnostics())
        return EXIT_NUMERICAL
    except Exception as e:
        LOGGER.exception('task %s failed unexpectedly', args.task)
        write_error(args.out or config.output_dir, e)
        return EXIT_PROBE
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
