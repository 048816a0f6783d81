import argparse
import logging
import os
import sys
from typing import List, Optional, Tuple

from dotenv import load_dotenv

from controller.controller import SimulationController
from controller.scenarios import SCENARIOS, run_named
from model.errors import BufsimError
from services.config_service import ConfigService

# Load environment variables
load_dotenv()

logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=getattr(logging, os.getenv('BUFSIM_LOG_LEVEL', 'INFO').upper(), logging.INFO)
)

logger = logging.getLogger(__name__)


def parse_axis(text: str) -> Tuple[str, List[str]]:
    key, sep, values = text.partition('=')
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError("axis must look like section.key=v1,v2,...")
    return key.strip(), [v.strip() for v in values.split(',') if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='bufsim', description='802.11 WLAN buffer sizing simulator')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='override one configuration entry (repeatable)')
    common.add_argument('--seed', type=int, help='base random seed')
    common.add_argument('--out', help='output directory (default $BUFSIM_OUT_DIR or results)')
    common.add_argument('--workers', type=int, help='worker processes (default $BUFSIM_WORKERS)')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', parents=[common], help='run one scenario')
    run.add_argument('config', nargs='?', help='scenario file of section.key = value lines')
    run.add_argument('--trace', action='store_true', help='write every trace record to trace.csv')

    sweep = sub.add_parser('sweep', parents=[common], help='sweep one configuration key')
    sweep.add_argument('config', nargs='?')
    sweep.add_argument('--axis', type=parse_axis, help='section.key=v1,v2,...')
    sweep.add_argument('--replicates', type=int, default=1)

    analyze = sub.add_parser('analyze', parents=[common], help='evaluate the congestion-epoch model')
    analyze.add_argument('config', nargs='?', help='file with model.* entries')
    analyze.add_argument('--trajectory', action='store_true', help='write trajectory.csv (k,EQ)')
    analyze.add_argument('--oracle-paths', type=int, default=0,
                         help='also run the Monte-Carlo oracle with this many paths')

    scenario = sub.add_parser('scenario', parents=[common], help='run a named experiment family')
    scenario.add_argument('name', choices=sorted(SCENARIOS))
    scenario.add_argument('--replicates', type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config_service = ConfigService()
        if args.seed is not None:
            config_service.seed = args.seed
        controller = SimulationController(config_service, workers=args.workers)
        view = controller.view

        if args.command == 'run':
            cfg = config_service.load_scenario(args.config, args.overrides, seed=args.seed)
            if args.trace:
                cfg.output.trace = True
            view.print_report(controller.run_scenario(cfg, args.out))
        elif args.command == 'sweep':
            cfg = config_service.load_scenario(args.config, args.overrides, seed=args.seed)
            key, values = args.axis if args.axis else (None, [])
            summary = controller.sweep(cfg, key, values, args.replicates, args.out)
            view.print_table(controller.sweep_summary(summary))
        elif args.command == 'analyze':
            model_cfg = config_service.load_model(args.config, args.overrides)
            view.print_analysis(controller.analyze(model_cfg, args.out, args.oracle_paths, args.trajectory))
        else:
            overrides = [config_service.parse_override(o) for o in args.overrides]
            summary = run_named(controller, args.name, overrides, args.out, args.replicates)
            view.print_table(controller.sweep_summary(summary))
    except BufsimError as e:
        logger.error(f"bufsim failed: {str(e)}")
        return 2
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}")
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
