"""
Experiment plans: a base scenario, named variations of it and the checks their results must pass.

A plan file is a scenario file plus

    [suite]
    name = attack_2bank
    baseline = solo
    metrics = slowdown, bank_histogram
    check.same_bank = same_bank:0:slowdown >= 2.0

    [variation.solo]
    core.1.enabled = false
"""
import csv
import logging
import operator
import re
import time
from collections import OrderedDict, namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

from scenario import (Entry, ScenarioError, apply_overrides, build_scenario, config_hash, format_rate,
                      read_sections)
from sim_engine import Scenario, SimResult, Simulation, audit_budget, regulation_unit_for, slowdown


logger = logging.getLogger('banksim')

METRICS = ('slowdown', 'throughput', 'bank_histogram')
CHECK_METRICS = ('cycles', 'completed', 'slowdown', 'stall_reg', 'stall_struct')
BASE_VARIATION = 'base'
UNFINISHED = 'unfinished'

_OPERATORS = OrderedDict([
    ('<=', operator.le),
    ('>=', operator.ge),
    ('==', operator.eq),
    ('<', operator.lt),
    ('>', operator.gt),
])
_TERM = r'([\w.=-]+):(\d+):(\w+)'
_NUMBER = r'[0-9]+(?:\.[0-9]+)?'
_COMPARE_RE = re.compile(r'^{0}(?:\s*/\s*{0})?\s*(<=|>=|==|<|>)\s*({1})$'.format(_TERM, _NUMBER))
_NONDECREASING_RE = re.compile(r'^nondecreasing\s+([\w.=,-]+):(\d+):(\w+)(?:\s+({0}))?$'.format(_NUMBER))


class SuiteError(ValueError):
    pass


@dataclass
class ExperimentPlan:
    name: str
    base: 'OrderedDict[str, OrderedDict[str, Entry]]'
    variations: List[Tuple[str, Dict[str, Entry]]] = field(default_factory=list)
    baseline: Optional[str] = None
    metrics: Tuple[str, ...] = ('slowdown',)
    checks: List[Tuple[str, Entry]] = field(default_factory=list)

    def __post_init__(self):
        if not self.variations:
            self.variations = [(BASE_VARIATION, {})]
        names = [name for name, _ in self.variations]
        if len(set(names)) != len(names):
            raise SuiteError('duplicate variation names in {}'.format(names))
        if self.baseline is not None and self.baseline not in names:
            raise SuiteError('baseline {!r} is not one of the variations {}'.format(self.baseline, names))
        for metric in self.metrics:
            if metric not in METRICS:
                raise SuiteError('unknown metric {!r}, expected one of {}'.format(metric, ', '.join(METRICS)))

    def scenario(self, variation: str) -> Scenario:
        for name, overrides in self.variations:
            if name == variation:
                return build_scenario(apply_overrides(self.base, overrides))
        raise SuiteError('no variation {!r}'.format(variation))

    def scenarios(self) -> 'OrderedDict[str, Scenario]':
        """Every variation built and validated, baseline first"""
        order = [name for name, _ in self.variations]
        if self.baseline is not None:
            order.remove(self.baseline)
            order.insert(0, self.baseline)
        return OrderedDict((name, self.scenario(name)) for name in order)


def parse_plan(text: str, name: Optional[str] = None) -> ExperimentPlan:
    sections = read_sections(text)
    base = OrderedDict()
    variations = []
    suite = OrderedDict()
    for section, entries in sections.items():
        if section == 'suite':
            suite = entries
        elif section.startswith('variation.'):
            overrides = OrderedDict((key, entry) for key, entry in entries.items() if key)
            variations.append((section[len('variation.'):], overrides))
        else:
            base[section] = entries

    checks = []
    for key, entry in suite.items():
        if not key:
            continue
        if key.startswith('check.'):
            checks.append((key[len('check.'):], entry))
        elif key not in ('name', 'baseline', 'metrics'):
            raise ScenarioError('unknown key in [suite]', key, entry.line)

    metrics = suite.get('metrics')
    plan = ExperimentPlan(
        name=suite['name'].value if 'name' in suite else (name or 'scenario'),
        base=base,
        variations=variations,
        baseline=suite['baseline'].value if 'baseline' in suite else None,
        metrics=tuple(m.strip() for m in metrics.value.split(',')) if metrics else ('slowdown',),
        checks=checks,
    )

    # Fail on a bad override or check before anything is simulated
    plan.scenarios()
    variation_names = {v for v, _ in plan.variations}
    for check_name, entry in plan.checks:
        for variation in _check_variations(entry.value, entry.line):
            if variation not in variation_names:
                raise ScenarioError('check refers to unknown variation {!r}'.format(variation),
                                    'check.' + check_name, entry.line)
    return plan


def sweep_plan(sections, param: str, values: Sequence[str], name: str = 'sweep') -> ExperimentPlan:
    """
    One variation per value of a dotted scenario key, plus a `solo` baseline in which only the measured core
    (run.measured_core, else the lowest core id) is enabled.
    """
    base = build_scenario(sections)
    measured = base.measured_core if base.measured_core is not None else base.cores[0].core_id
    solo = OrderedDict(('core.{}.enabled'.format(spec.core_id), Entry('false', None))
                       for spec in base.cores if spec.core_id != measured)

    variations = [('solo', solo)]
    for value in values:
        variations.append(('{}={}'.format(param, value), {param: Entry(str(value), None)}))
    plan = ExperimentPlan(name=name, base=sections, variations=variations, baseline='solo')
    plan.scenarios()
    return plan


# Running

VariationRun = namedtuple('VariationRun', ['name', 'scenario', 'result', 'violations', 'config_hash'])


def _simulate(job: Tuple[str, Scenario, bool]) -> Tuple[SimResult, List[str]]:
    name, scenario, audit = job
    started = time.monotonic()
    result = Simulation(scenario, record_trace=audit).run()
    violations = audit_budget(scenario, result) if audit else []
    logger.info('Variation %s: %d cycles, finished %s, %.1fs', name, result.cycles_elapsed, result.finished,
                time.monotonic() - started)
    if result.trace is not None:
        result = SimResult(result.cycles_elapsed, result.per_core, result.per_bank_access, result.finished)
    return result, violations


def run_suite(plan: ExperimentPlan, jobs: int = 1, seed: Optional[int] = None,
              audit: bool = False) -> 'OrderedDict[str, VariationRun]':
    """
    Simulate every variation of the plan, baseline first.

    :param jobs: worker processes; 1 runs in this process
    :param seed: overrides run.seed of every variation
    :param audit: record regulator traces and check every regulation window against its budget
    :return: runs keyed by variation, in declared order
    """
    if seed is not None:
        plan = ExperimentPlan(plan.name, apply_overrides(plan.base, {'run.seed': Entry(str(seed), None)}),
                              plan.variations, plan.baseline, plan.metrics, plan.checks)

    scenarios = plan.scenarios()
    logger.info('Suite %s: %d variations, %d jobs', plan.name, len(scenarios), jobs)
    work = [(name, scenario, audit) for name, scenario in scenarios.items()]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_simulate, work))
    else:
        outcomes = [_simulate(job) for job in work]

    runs = {}
    for (name, scenario, _), (result, violations) in zip(work, outcomes):
        if not result.finished:
            logger.warning('Variation %s hit max_cycles=%d', name, scenario.max_cycles)
        for violation in violations:
            logger.warning('Variation %s budget audit: %s', name, violation)
        runs[name] = VariationRun(name, scenario, result, violations, config_hash(scenario))

    ordered = OrderedDict((name, runs[name]) for name, _ in plan.variations)
    _log_metrics(plan, ordered)
    return ordered


def _slowdown_of(plan: ExperimentPlan, runs, variation: str, core: int) -> Optional[float]:
    if plan.baseline is None:
        return None
    run = runs[variation]
    base = runs[plan.baseline].result
    stats = run.result.per_core.get(core)
    if stats is None or not stats.finished or core not in base.per_core or not base.per_core[core].finished:
        return None
    return slowdown(run.result, base, core)


def _log_metrics(plan: ExperimentPlan, runs):
    for name, run in runs.items():
        for core, stats in run.result.per_core.items():
            if 'slowdown' in plan.metrics:
                value = _slowdown_of(plan, runs, name, core)
                if value is not None:
                    logger.info('%s core %d slowdown %.3f', name, core, value)
            if 'throughput' in plan.metrics:
                logger.info('%s core %d throughput %.4f accesses/cycle', name, core,
                            stats.completed / max(run.result.cycles(core), 1))
            if 'bank_histogram' in plan.metrics:
                logger.info('%s core %d banks %s', name, core, list(run.result.per_bank_access[core]))


# CSV

def csv_header(num_banks: int) -> List[str]:
    return (['suite', 'variation', 'policy', 'num_banks', 'rpr', 'abr_domain0', 'abr_domain1', 'core', 'domain',
             'cycles', 'completed', 'stall_reg', 'stall_struct'] +
            ['bank{}'.format(b) for b in range(num_banks)] + ['slowdown', 'config_hash'])


def suite_rows(plan: ExperimentPlan, runs) -> List[List[str]]:
    """One row per (variation, core), in declared variation order then core id"""
    rows = []
    for name, run in runs.items():
        reg = run.scenario.regulator
        budgets = list(reg.access_budget) + ['']
        for core in sorted(run.result.per_core):
            stats = run.result.per_core[core]
            if not run.result.finished:
                flag = UNFINISHED
            else:
                value = _slowdown_of(plan, runs, name, core)
                flag = '' if value is None else '{:.4f}'.format(value)
            rows.append(
                [plan.name, name, reg.policy.value, reg.num_banks, reg.regulation_period, budgets[0], budgets[1],
                 core, stats.domain, run.result.cycles(core), stats.completed, stats.stall_cycles_regulatory,
                 stats.stall_cycles_structural] +
                list(run.result.per_bank_access[core]) + [flag, run.config_hash])
    return rows


def write_csv(plan: ExperimentPlan, runs, stream: TextIO, timestamp: bool = True):
    num_banks = max(run.scenario.llc.num_banks for run in runs.values())
    if timestamp:
        stream.write('# generated {}\n'.format(time.strftime('%Y-%m-%dT%H:%M:%S')))
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(csv_header(num_banks))
    for row in suite_rows(plan, runs):
        # pad narrower variations so every row has the same columns
        banks = row[13:-2]
        writer.writerow(row[:13] + banks + [''] * (num_banks - len(banks)) + row[-2:])


# Checks

CheckOutcome = namedtuple('CheckOutcome', ['name', 'expression', 'passed', 'detail'])


def _check_variations(expression: str, line: Optional[int]) -> List[str]:
    expression = expression.strip()
    match = _NONDECREASING_RE.match(expression)
    if match:
        return match.group(1).split(',')
    match = _COMPARE_RE.match(expression)
    if match:
        return [v for v in (match.group(1), match.group(4)) if v]
    raise ScenarioError('cannot parse check {!r}'.format(expression), 'check', line)


def _metric(plan: ExperimentPlan, runs, variation: str, core: int, metric: str) -> float:
    if metric not in CHECK_METRICS:
        raise SuiteError('unknown check metric {!r}'.format(metric))
    run = runs[variation]
    if core not in run.result.per_core:
        raise SuiteError('variation {} has no core {}'.format(variation, core))
    stats = run.result.per_core[core]
    if metric == 'cycles':
        return run.result.cycles(core)
    if metric == 'completed':
        return stats.completed
    if metric == 'stall_reg':
        return stats.stall_cycles_regulatory
    if metric == 'stall_struct':
        return stats.stall_cycles_structural
    value = _slowdown_of(plan, runs, variation, core)
    if value is None:
        raise SuiteError('no slowdown for core {} of {} (no baseline or unfinished run)'.format(core, variation))
    return value


def evaluate_checks(plan: ExperimentPlan, runs) -> List[CheckOutcome]:
    outcomes = []
    for name, entry in plan.checks:
        expression = entry.value.strip()
        try:
            passed, detail = _evaluate(plan, runs, expression)
        except SuiteError as e:
            passed, detail = False, str(e)
        if not passed:
            logger.warning('Check %s failed: %s (%s)', name, expression, detail)
        outcomes.append(CheckOutcome(name, expression, passed, detail))

    for name, run in runs.items():
        if run.violations:
            outcomes.append(CheckOutcome('budget_audit.' + name, 'audit', False, run.violations[0]))
    return outcomes


def _evaluate(plan: ExperimentPlan, runs, expression: str) -> Tuple[bool, str]:
    match = _NONDECREASING_RE.match(expression)
    if match:
        variations, core, metric = match.group(1).split(','), int(match.group(2)), match.group(3)
        tolerance = float(match.group(4) or 0)
        values = [_metric(plan, runs, v, core, metric) for v in variations]
        passed = all(later >= earlier * (1 - tolerance) for earlier, later in zip(values, values[1:]))
        return passed, ', '.join('{:.4f}'.format(v) for v in values)

    match = _COMPARE_RE.match(expression)
    if not match:
        raise SuiteError('cannot parse check {!r}'.format(expression))
    value = _metric(plan, runs, match.group(1), int(match.group(2)), match.group(3))
    if match.group(4):
        value /= _metric(plan, runs, match.group(4), int(match.group(5)), match.group(6))
    threshold = float(match.group(8))
    return _OPERATORS[match.group(7)](value, threshold), '{:.4f}'.format(value)


# Profiling and registers

Profile = namedtuple('Profile', ['core', 'histogram', 'accesses', 'cycles', 'read_bandwidth', 'write_bandwidth'])


def profile(scenario: Scenario, core: int) -> Profile:
    """
    Per-bank access histogram of one core and the bandwidth it achieved, bytes completed over elapsed time at
    the configured clock.
    """
    if not 0 <= core < scenario.regulator.num_cores:
        raise SuiteError('core {} out of range, scenario has {} cores'.format(core, scenario.regulator.num_cores))
    result = Simulation(scenario).run()
    histogram = tuple(result.per_bank_access[core])
    if core not in result.per_core:
        # an id the scenario leaves idle
        return Profile(core, histogram, 0, result.cycles_elapsed, 0.0, 0.0)

    spec = scenario.core(core)
    cycles = result.cycles(core)
    nbytes = result.per_core[core].completed * scenario.llc.line_size
    bandwidth = nbytes * scenario.regulator.clock_frequency / cycles if cycles else 0.0
    if spec.workload.is_write:
        return Profile(core, histogram, sum(histogram), cycles, 0.0, bandwidth)
    return Profile(core, histogram, sum(histogram), cycles, bandwidth, 0.0)


def format_profile(item: Profile) -> str:
    return 'core {}: banks {} accesses {} cycles {} read {} write {}'.format(
        item.core, list(item.histogram), item.accesses, item.cycles, format_rate(item.read_bandwidth),
        format_rate(item.write_bandwidth))


def dump_registers(scenario: Scenario, after_run: bool = False) -> List[str]:
    """The regulation unit's register file, one `offset name value` line per register"""
    if after_run:
        simulation = Simulation(scenario)
        simulation.run()
        unit = simulation.regulator
    else:
        unit = regulation_unit_for(scenario)
    return ['{:#05x}  {:<16} {}'.format(offset, label, value) for offset, label, value in unit.registers()]
