#!/usr/bin/env python3
import argparse
import logging
import sys

logger = logging.getLogger('banksim')
cons_handler = logging.StreamHandler()
formatter = logging.Formatter('%(asctime)s %(levelname)s %(name)s  %(message)s')
cons_handler.setFormatter(formatter)
logger.addHandler(cons_handler)

from cores import EngineError
from harness import (ExperimentPlan, SuiteError, dump_registers, evaluate_checks, format_profile, parse_plan,
                     profile, run_suite, sweep_plan, write_csv)
from regulator import RegulatorError
from scenario import (Entry, ScenarioError, apply_overrides, build_scenario, config_hash, read_sections,
                      validation_report)

EXIT_USAGE = 1
EXIT_SIMULATION = 2
EXIT_CHECK = 3


def _read(path: str) -> str:
    with open(path) as f:
        return f.read()


def _write_report(args, plan, runs):
    if args.out:
        with open(args.out, 'w', newline='') as f:
            write_csv(plan, runs, f, timestamp=not args.no_timestamp)
        logger.info('Wrote %s', args.out)
    else:
        write_csv(plan, runs, sys.stdout, timestamp=not args.no_timestamp)


def cmd_run(args) -> int:
    sections = read_sections(_read(args.file))
    base = {name: entries for name, entries in sections.items()
            if name != 'suite' and not name.startswith('variation.')}
    if args.seed is not None:
        base = apply_overrides(base, {'run.seed': Entry(str(args.seed), None)})
    plan = ExperimentPlan(name=args.file, base=base)
    scenario = plan.scenario(plan.variations[0][0])
    for line in validation_report(scenario):
        logger.info('%s', line)
    logger.info('Configuration hash %s', config_hash(scenario))
    runs = run_suite(plan)
    _write_report(args, plan, runs)
    return 0


def cmd_suite(args) -> int:
    plan = parse_plan(_read(args.file), name=args.file)
    runs = run_suite(plan, jobs=args.jobs, seed=args.seed, audit=args.check)
    _write_report(args, plan, runs)
    if args.check:
        outcomes = evaluate_checks(plan, runs)
        for outcome in outcomes:
            logger.info('check %-24s %s  %s', outcome.name, 'PASS' if outcome.passed else 'FAIL', outcome.detail)
        if not all(outcome.passed for outcome in outcomes):
            return EXIT_CHECK
    return 0


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(',') if v.strip()]
    if not values:
        raise SuiteError('--values needs at least one value')
    plan = sweep_plan(read_sections(_read(args.file)), args.param, values, name='sweep')
    runs = run_suite(plan, jobs=args.jobs, seed=args.seed)
    _write_report(args, plan, runs)
    return 0


def cmd_profile(args) -> int:
    scenario = build_scenario(read_sections(_read(args.file)))
    print(format_profile(profile(scenario, args.core)))
    return 0


def cmd_dump_registers(args) -> int:
    scenario = build_scenario(read_sections(_read(args.file)))
    for line in dump_registers(scenario, after_run=args.after_run):
        print(line)
    return 0


class _Parser(argparse.ArgumentParser):
    """usage errors exit with 1 like every other bad input"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '{}: error: {}\n'.format(self.prog, message))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(description='Multi-bank LLC simulator with per-bank bandwidth regulation')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    parser.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    commands = parser.add_subparsers(dest='command', required=True)

    def report_args(sub):
        sub.add_argument('--out', help='CSV file, stdout when omitted')
        sub.add_argument('--seed', type=int, help='override run.seed')
        sub.add_argument('--no-timestamp', action='store_true', help='omit the `# generated` header line')

    sub = commands.add_parser('run', help='simulate one scenario')
    sub.add_argument('file')
    report_args(sub)
    sub.set_defaults(handler=cmd_run)

    sub = commands.add_parser('suite', help='simulate every variation of a plan file')
    sub.add_argument('file')
    sub.add_argument('--jobs', type=int, default=1)
    sub.add_argument('--check', action='store_true', help='audit budgets and evaluate the plan checks')
    report_args(sub)
    sub.set_defaults(handler=cmd_suite)

    sub = commands.add_parser('sweep', help='vary one scenario key against a solo baseline')
    sub.add_argument('file')
    sub.add_argument('--param', required=True, help='dotted key, e.g. domain.1.abr')
    sub.add_argument('--values', required=True, help='comma separated values')
    sub.add_argument('--jobs', type=int, default=1)
    report_args(sub)
    sub.set_defaults(handler=cmd_sweep)

    sub = commands.add_parser('profile', help='per-bank histogram and bandwidth of one core')
    sub.add_argument('file')
    sub.add_argument('--core', type=int, required=True)
    sub.set_defaults(handler=cmd_profile)

    sub = commands.add_parser('dump-registers', help='list the regulation unit register file')
    sub.add_argument('file')
    sub.add_argument('--after-run', action='store_true')
    sub.set_defaults(handler=cmd_dump_registers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logger.setLevel(level)
    cons_handler.setLevel(level)

    try:
        return args.handler(args)
    except (ScenarioError, SuiteError, OSError) as e:
        logger.error('%s', e)
        return EXIT_USAGE
    except (EngineError, RegulatorError) as e:
        logger.error('Simulation failed: %s', e)
        return EXIT_SIMULATION


if __name__ == '__main__':
    sys.exit(main())
