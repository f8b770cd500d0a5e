"""
Scenario files.

Section based key/value text:

    # comment
    [llc]
    num_banks = 2

    [core.0]
    workload = bkpll
    wss = 128K

Integers accept `_` separators and K/M/G suffixes: powers of two for sizes, powers of ten for everything
else (Hz, bandwidths, cycle counts). Values are kept with their line number until the scenario is built so
every error can point at the offending line.
"""
import logging
import re
from collections import OrderedDict, namedtuple
from fractions import Fraction
from typing import Dict, List, Optional

from address_map import BEST_EFFORT, VICTIM, AddressMapError, BankMapConfig, PartitionConfig, Region
from cores import CoreModel, EngineError
from memory_subsystem import LlcConfig
from PyCRC.CRC32 import CRC32
from regulator import (DEFAULT_ACCESS_BUDGET, Policy, RegulatorConfig, RegulatorError, abr_for_bandwidth,
                       bandwidth_of, effective_period)
from sim_engine import CoreSpec, Scenario
from workloads import DEFAULT_MAX_OUTSTANDING, LayoutError, WorkloadKind, WorkloadSpec


logger = logging.getLogger('banksim')

Entry = namedtuple('Entry', ['value', 'line'])

SIZE_KEYS = {
    'wss', 'stride', 'region_offset', 'line_size',
    'victim_base', 'victim_size', 'best_effort_base', 'best_effort_size',
}

SCENARIO_KEYS = {
    'llc': {'num_banks', 'bank_service_cycles', 'write_service_cycles', 'hit_latency', 'queue_depth', 'line_size'},
    'bank_map': {'start_bit'},
    'partition': {'victim_base', 'victim_size', 'best_effort_base', 'best_effort_size'},
    'regulator': {'policy', 'rpr', 'transaction_size', 'clock', 'num_domains'},
    'run': {'max_cycles', 'seed', 'measured_core'},
    'domain': {'abr', 'bandwidth'},
    'core': {'enabled', 'domain', 'regulated', 'max_outstanding', 'workload', 'wss', 'target_bank', 'write',
             'mlp', 'stride', 'iterations', 'region', 'region_offset'},
}

# Sections owned by experiment plans; a scenario build skips them.
PLAN_SECTIONS = ('suite', 'variation')

_SECTION_RE = re.compile(r'^\[\s*([A-Za-z_][\w.]*)\s*\]$')
_NUMBER_RE = re.compile(r'^([0-9][0-9_]*(?:\.[0-9_]+)?)\s*([KMGkmg]?)$')

_BINARY = {'': 1, 'K': 1 << 10, 'M': 1 << 20, 'G': 1 << 30}
_DECIMAL = {'': 1, 'K': 10 ** 3, 'M': 10 ** 6, 'G': 10 ** 9}

_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}


class ScenarioError(ValueError):
    """Parse or validation error, tied to a key and a line when one is known"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append('line {}'.format(line))
        if key is not None:
            where.append(key)
        super().__init__('{}: {}'.format(', '.join(where), message) if where else message)


def read_sections(text: str) -> 'OrderedDict[str, OrderedDict[str, Entry]]':
    """
    Split the text into sections of raw entries.
    The header line of each section is stored under the pseudo key '' so empty sections keep a line number.
    """
    sections = OrderedDict()
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue

        header = _SECTION_RE.match(line)
        if header:
            name = header.group(1)
            if name in sections:
                raise ScenarioError('duplicate section [{}]'.format(name), name, number)
            current = sections[name] = OrderedDict([('', Entry(None, number))])
            continue

        if '=' not in line:
            raise ScenarioError('expected `key = value`, got {!r}'.format(line), None, number)
        key, value = (part.strip() for part in line.split('=', 1))
        if current is None:
            raise ScenarioError('key outside of any section', key, number)
        if not key or not value:
            raise ScenarioError('empty key or value', key or None, number)
        if key in current:
            raise ScenarioError('duplicate key', key, number)
        current[key] = Entry(value, number)
    return sections


def apply_overrides(sections, overrides: Dict[str, Entry]):
    """
    Copy of sections with dotted overrides applied: `core.1.target_bank` sets key target_bank of [core.1].
    A section named by an override is created when missing.
    """
    result = OrderedDict((name, OrderedDict(entries)) for name, entries in sections.items())
    for dotted, entry in overrides.items():
        if '.' not in dotted:
            raise ScenarioError('override must be <section>.<key>', dotted, entry.line)
        section, key = dotted.rsplit('.', 1)
        result.setdefault(section, OrderedDict([('', Entry(None, entry.line))]))[key] = entry
    return result


def parse_number(value: str, key: str, line: Optional[int]) -> Fraction:
    match = _NUMBER_RE.match(value.strip())
    if not match:
        raise ScenarioError('not a number: {!r}'.format(value), key, line)
    digits, suffix = match.group(1).replace('_', ''), match.group(2).upper()
    scale = _BINARY if key in SIZE_KEYS else _DECIMAL
    return Fraction(digits) * scale[suffix]


def parse_int(value: str, key: str, line: Optional[int]) -> int:
    number = parse_number(value, key, line)
    if number.denominator != 1:
        raise ScenarioError('not an integer: {!r}'.format(value), key, line)
    return int(number)


def parse_bool(value: str, key: str, line: Optional[int]) -> bool:
    lowered = value.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ScenarioError('not a boolean: {!r}'.format(value), key, line)


class _Section:
    """Typed access to the entries of one section; unknown keys are rejected up front"""

    def __init__(self, name: str, entries: Dict[str, Entry], known_keys):
        self.name = name
        self.entries = entries
        self.line = entries[''].line if '' in entries else None
        for key, entry in entries.items():
            if key and key not in known_keys:
                raise ScenarioError('unknown key in [{}]'.format(name), key, entry.line)

    def has(self, key: str) -> bool:
        return key in self.entries

    def line_of(self, key: str) -> Optional[int]:
        entry = self.entries.get(key)
        return entry.line if entry else self.line

    def get_int(self, key: str, default=None):
        entry = self.entries.get(key)
        if entry is None:
            return default
        return parse_int(entry.value, key, entry.line)

    def get_bool(self, key: str, default: bool) -> bool:
        entry = self.entries.get(key)
        if entry is None:
            return default
        return parse_bool(entry.value, key, entry.line)

    def get_str(self, key: str, default=None):
        entry = self.entries.get(key)
        return default if entry is None else entry.value

    def get_optional_int(self, key: str, default=None):
        entry = self.entries.get(key)
        if entry is None:
            return default
        if entry.value.lower() == 'none':
            return None
        return parse_int(entry.value, key, entry.line)


def _section(sections, name: str) -> _Section:
    base = name.split('.', 1)[0]
    return _Section(name, sections.get(name, OrderedDict()), SCENARIO_KEYS[base])


def _indexed_sections(sections, prefix: str) -> Dict[int, _Section]:
    found = {}
    for name, entries in sections.items():
        if not name.startswith(prefix + '.'):
            continue
        index = name[len(prefix) + 1:]
        if not index.isdigit():
            raise ScenarioError('section index must be an integer', name, entries[''].line)
        found[int(index)] = _Section(name, entries, SCENARIO_KEYS[prefix])
    return dict(sorted(found.items()))


def _enum(enum_cls, value: str, key: str, line: Optional[int]):
    try:
        return enum_cls(value.lower())
    except ValueError:
        choices = ', '.join(member.value for member in enum_cls)
        raise ScenarioError('{!r} is not one of {}'.format(value, choices), key, line) from None


def build_scenario(sections) -> Scenario:
    """Validate raw sections and build the Scenario, with every default filled in"""
    for name, entries in sections.items():
        base = name.split('.', 1)[0]
        if base in PLAN_SECTIONS:
            continue
        indexed = base in ('domain', 'core')
        if base not in SCENARIO_KEYS or indexed != ('.' in name):
            raise ScenarioError('unknown section [{}]'.format(name), name, entries[''].line)

    llc_s = _section(sections, 'llc')
    num_banks = llc_s.get_int('num_banks', 2)
    if num_banks not in (1, 2, 4, 8):
        raise ScenarioError('num_banks must be a power of two up to 8, got {}'.format(num_banks),
                            'num_banks', llc_s.line_of('num_banks'))
    line_size = llc_s.get_int('line_size', 64)
    try:
        llc = LlcConfig(
            num_banks=num_banks,
            bank_service_cycles=llc_s.get_int('bank_service_cycles', LlcConfig.bank_service_cycles),
            hit_latency=llc_s.get_int('hit_latency', LlcConfig.hit_latency),
            queue_depth=llc_s.get_int('queue_depth', LlcConfig.queue_depth),
            write_service_cycles=llc_s.get_optional_int('write_service_cycles'),
            line_size=line_size,
        )
        bank_map_s = _section(sections, 'bank_map')
        bank_map = BankMapConfig(start_bit=bank_map_s.get_int('start_bit', 6), num_banks=num_banks,
                                 line_size=line_size)
    except ScenarioError:
        raise
    except (ValueError, AddressMapError) as e:
        raise ScenarioError(str(e), 'llc', llc_s.line) from None

    part_s = _section(sections, 'partition')
    default_part = PartitionConfig()
    victim_base = part_s.get_int('victim_base', default_part.victim_region.base)
    best_effort_base = part_s.get_int('best_effort_base', default_part.best_effort_region.base)
    try:
        partition = PartitionConfig(
            victim_region=Region(victim_base, victim_base + part_s.get_int('victim_size',
                                                                       default_part.victim_region.size)),
            best_effort_region=Region(best_effort_base, best_effort_base + part_s.get_int(
                'best_effort_size', default_part.best_effort_region.size)),
        )
    except AddressMapError as e:
        raise ScenarioError(str(e), 'partition', part_s.line) from None

    declared = _indexed_sections(sections, 'core')
    if not declared:
        # no core declared: a lone core 0 with workload defaults
        declared = {0: _Section('core.0', OrderedDict(), SCENARIO_KEYS['core'])}
    core_sections = {index: section for index, section in declared.items() if section.get_bool('enabled', True)}
    if not core_sections:
        raise ScenarioError('scenario has no enabled [core.<c>] section')
    domain_sections = _indexed_sections(sections, 'domain')

    reg_s = _section(sections, 'regulator')
    highest_domain = max([s.get_int('domain', 0) for s in core_sections.values()] + list(domain_sections) + [1])
    num_domains = reg_s.get_int('num_domains', highest_domain + 1)
    policy = _enum(Policy, reg_s.get_str('policy', Policy.UNREGULATED.value), 'policy', reg_s.line_of('policy'))
    rpr = reg_s.get_int('rpr', RegulatorConfig.regulation_period)
    transaction_size = reg_s.get_int('transaction_size', RegulatorConfig.transaction_size)
    clock = reg_s.get_int('clock', RegulatorConfig.clock_frequency)

    budgets = []
    for domain in range(num_domains):
        dom_s = domain_sections.get(domain) or _section(sections, 'domain.{}'.format(domain))
        if dom_s.has('abr') and dom_s.has('bandwidth'):
            raise ScenarioError('give either abr or bandwidth, not both', 'domain.{}'.format(domain), dom_s.line)
        if dom_s.has('bandwidth'):
            budgets.append(abr_for_bandwidth(dom_s.get_int('bandwidth'), rpr, transaction_size, clock))
        else:
            budgets.append(dom_s.get_int('abr', DEFAULT_ACCESS_BUDGET))
    for domain, dom_s in domain_sections.items():
        if domain >= num_domains:
            raise ScenarioError('domain {} exceeds num_domains = {}'.format(domain, num_domains),
                                dom_s.name, dom_s.line)

    try:
        regulator = RegulatorConfig(
            policy=policy,
            regulation_period=rpr,
            num_domains=num_domains,
            num_cores=max(core_sections) + 1,
            num_banks=num_banks,
            access_budget=tuple(budgets),
            transaction_size=transaction_size,
            clock_frequency=clock,
        )
    except RegulatorError as e:
        raise ScenarioError(str(e), 'regulator', reg_s.line) from None

    run_s = _section(sections, 'run')
    seed = run_s.get_int('seed', 0)
    cores = []
    for index, core_s in core_sections.items():
        spec = _build_core(index, core_s, num_banks)
        if spec.domain >= num_domains:
            raise ScenarioError('domain {} exceeds num_domains = {}'.format(spec.domain, num_domains),
                                'domain', core_s.line_of('domain'))
        cores.append(spec)
        try:
            CoreModel(index, spec.workload, partition.region(spec.region), bank_map, seed + index,
                      spec.max_outstanding, spec.region_offset)
        except (LayoutError, AddressMapError) as e:
            raise ScenarioError(str(e), core_s.name, core_s.line) from None

    try:
        return Scenario(
            llc=llc,
            bank_map=bank_map,
            regulator=regulator,
            cores=tuple(cores),
            partition=partition,
            max_cycles=run_s.get_int('max_cycles', Scenario.max_cycles),
            seed=seed,
            measured_core=run_s.get_optional_int('measured_core'),
        )
    except EngineError as e:
        raise ScenarioError(str(e), 'run', run_s.line) from None


def _build_core(index: int, core_s: _Section, num_banks: int) -> CoreSpec:
    kind = _enum(WorkloadKind, core_s.get_str('workload', WorkloadKind.BKPLL.value), 'workload',
                 core_s.line_of('workload'))
    target_bank = core_s.get_optional_int('target_bank')
    if target_bank is not None and not 0 <= target_bank < num_banks:
        raise ScenarioError('target_bank {} does not exist ({} banks)'.format(target_bank, num_banks),
                            'target_bank', core_s.line_of('target_bank'))

    region = core_s.get_str('region', VICTIM if index == 0 else BEST_EFFORT)
    if region not in (VICTIM, BEST_EFFORT):
        raise ScenarioError('region must be {} or {}'.format(VICTIM, BEST_EFFORT), 'region',
                            core_s.line_of('region'))

    try:
        workload = WorkloadSpec(
            kind=kind,
            wss=core_s.get_int('wss', WorkloadSpec.wss),
            target_bank=target_bank,
            is_write=core_s.get_bool('write', False),
            mlp=core_s.get_int('mlp'),
            stride=core_s.get_int('stride', WorkloadSpec.stride),
            total_iterations=core_s.get_int('iterations'),
        )
    except LayoutError as e:
        raise ScenarioError(str(e), core_s.name, core_s.line) from None

    max_outstanding = core_s.get_int('max_outstanding')
    if max_outstanding is not None and max_outstanding < 1:
        raise ScenarioError('max_outstanding must be >= 1', 'max_outstanding', core_s.line_of('max_outstanding'))

    return CoreSpec(
        core_id=index,
        workload=workload,
        domain=core_s.get_int('domain', 0),
        regulated=core_s.get_bool('regulated', False),
        max_outstanding=max_outstanding,
        region=region,
        region_offset=core_s.get_int('region_offset', 0),
    )


def parse_scenario(text: str) -> Scenario:
    scenario = build_scenario(read_sections(text))
    for line in validation_report(scenario):
        logger.info('%s', line)
    return scenario


def format_rate(bytes_per_second: float) -> str:
    """Decimal units, as bandwidth figures are quoted: 640 MB/s, 15.36 GB/s"""
    for unit, scale in (('GB/s', 10 ** 9), ('MB/s', 10 ** 6), ('KB/s', 10 ** 3)):
        if bytes_per_second >= scale:
            return '{:g} {}'.format(round(bytes_per_second / scale, 4), unit)
    return '{:g} B/s'.format(bytes_per_second)


def validation_report(scenario: Scenario) -> List[str]:
    """Human readable echo of what the regulator will enforce"""
    reg = scenario.regulator
    lines = ['policy {}, RPR {} cycles (effective window {} cycles), TS {} B, f {} Hz'.format(
        reg.policy.value, reg.regulation_period, effective_period(reg.regulation_period),
        reg.transaction_size, reg.clock_frequency)]
    for domain, abr in enumerate(reg.access_budget):
        nominal = bandwidth_of(abr, reg.regulation_period, reg.transaction_size, reg.clock_frequency)
        effective = bandwidth_of(abr, effective_period(reg.regulation_period), reg.transaction_size,
                                 reg.clock_frequency)
        lines.append('domain {}: ABR {} -> {} per bank ({} effective)'.format(
            domain, abr, format_rate(nominal), format_rate(effective)))
    lines.append('LLC: {} banks, peak {} per bank'.format(
        scenario.llc.num_banks, format_rate(scenario.llc.peak_bandwidth(reg.clock_frequency))))
    return lines


def dump_scenario(scenario: Scenario) -> str:
    """
    Canonical text of the effective configuration, defaults filled in.
    Dumping the parsed dump gives the same text again, so its CRC identifies a configuration.
    """
    llc = scenario.llc
    reg = scenario.regulator
    part = scenario.partition
    out = [
        '[llc]',
        'num_banks = {}'.format(llc.num_banks),
        'bank_service_cycles = {}'.format(llc.bank_service_cycles),
        'write_service_cycles = {}'.format('none' if llc.write_service_cycles is None
                                           else llc.write_service_cycles),
        'hit_latency = {}'.format(llc.hit_latency),
        'queue_depth = {}'.format(llc.queue_depth),
        'line_size = {}'.format(llc.line_size),
        '',
        '[bank_map]',
        'start_bit = {}'.format(scenario.bank_map.start_bit),
        '',
        '[partition]',
        'victim_base = {}'.format(part.victim_region.base),
        'victim_size = {}'.format(part.victim_region.size),
        'best_effort_base = {}'.format(part.best_effort_region.base),
        'best_effort_size = {}'.format(part.best_effort_region.size),
        '',
        '[regulator]',
        'policy = {}'.format(reg.policy.value),
        'rpr = {}'.format(reg.regulation_period),
        'transaction_size = {}'.format(reg.transaction_size),
        'clock = {}'.format(reg.clock_frequency),
        'num_domains = {}'.format(reg.num_domains),
    ]
    for domain, abr in enumerate(reg.access_budget):
        out += ['', '[domain.{}]'.format(domain), 'abr = {}'.format(abr)]

    for spec in scenario.cores:
        workload = spec.workload.with_defaults(llc.line_size)
        out += [
            '',
            '[core.{}]'.format(spec.core_id),
            'domain = {}'.format(spec.domain),
            'regulated = {}'.format(str(spec.regulated).lower()),
            'max_outstanding = {}'.format(spec.max_outstanding or DEFAULT_MAX_OUTSTANDING[workload.kind]),
            'workload = {}'.format(workload.kind.value),
            'wss = {}'.format(workload.wss),
            'target_bank = {}'.format('none' if workload.target_bank is None else workload.target_bank),
            'write = {}'.format(str(workload.is_write).lower()),
            'mlp = {}'.format(workload.mlp),
            'stride = {}'.format(workload.stride),
            'iterations = {}'.format(workload.total_iterations),
            'region = {}'.format(spec.region),
            'region_offset = {}'.format(spec.region_offset),
        ]

    out += [
        '',
        '[run]',
        'max_cycles = {}'.format(scenario.max_cycles),
        'seed = {}'.format(scenario.seed),
        'measured_core = {}'.format('none' if scenario.measured_core is None else scenario.measured_core),
    ]
    return '\n'.join(out) + '\n'


def config_hash(scenario: Scenario) -> str:
    """CRC32 of the canonical dump, as eight hex digits"""
    return CRC32().hexdigest(dump_scenario(scenario))
