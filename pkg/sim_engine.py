import logging
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from address_map import VICTIM, BankMapConfig, PartitionConfig
from cores import CoreModel, EngineError
from memory_subsystem import LlcConfig, SharedCache
from regulator import Policy, RegulationUnit, RegulatorConfig, RegulatorState, reference_step
from workloads import WorkloadSpec


logger = logging.getLogger('banksim')


@dataclass(frozen=True)
class CoreSpec:
    core_id: int
    workload: WorkloadSpec
    domain: int = 0
    regulated: bool = False
    max_outstanding: Optional[int] = None
    region: str = VICTIM
    region_offset: int = 0


@dataclass(frozen=True)
class Scenario:
    """One co-run setup. Core ids index the regulator's DAR/RER registers; absent ids are idle cores."""
    llc: LlcConfig
    bank_map: BankMapConfig
    regulator: RegulatorConfig
    cores: Tuple[CoreSpec, ...]
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    max_cycles: int = 10000000
    seed: int = 0
    measured_core: Optional[int] = None

    def __post_init__(self):
        banks = {self.llc.num_banks, self.bank_map.num_banks, self.regulator.num_banks}
        if len(banks) != 1:
            raise EngineError('llc, bank_map and regulator disagree on the number of banks: {}'.format(banks))
        if self.llc.line_size != self.bank_map.line_size:
            raise EngineError('llc and bank_map disagree on the line size')
        if not self.cores:
            raise EngineError('scenario has no cores')

        ids = [spec.core_id for spec in self.cores]
        if ids != sorted(set(ids)):
            raise EngineError('core ids must be unique and ascending, got {}'.format(ids))
        if ids[-1] >= self.regulator.num_cores:
            raise EngineError('core {} does not fit a regulator with {} cores'.format(
                ids[-1], self.regulator.num_cores))

        for spec in self.cores:
            if not 0 <= spec.domain < self.regulator.num_domains:
                raise EngineError('core {} assigned to domain {} of {}'.format(
                    spec.core_id, spec.domain, self.regulator.num_domains))
            self.partition.region(spec.region)

        if self.measured_core is not None and self.measured_core not in ids:
            raise EngineError('measured core {} is not part of the scenario'.format(self.measured_core))
        if self.max_cycles < 1:
            raise EngineError('max_cycles must be >= 1')

    def core(self, core_id: int) -> CoreSpec:
        for spec in self.cores:
            if spec.core_id == core_id:
                return spec
        raise KeyError(core_id)


def regulation_unit_for(scenario: Scenario) -> RegulationUnit:
    """Regulation unit with DAR and RER programmed from the scenario's core assignments"""
    config = scenario.regulator
    domain_of = [0] * config.num_cores
    regulated = [False] * config.num_cores
    for spec in scenario.cores:
        domain_of[spec.core_id] = spec.domain
        regulated[spec.core_id] = spec.regulated
    return RegulationUnit(config, domain_of, regulated)


CoreStats = namedtuple('CoreStats', [
    'core', 'domain', 'completed', 'accepted', 'stall_cycles_regulatory', 'stall_cycles_structural',
    'finish_cycle', 'finished',
])

# One cycle of regulator traffic: the (core, bank) pairs evaluated and the ones stalled. Only cores the regulator
# decided on appear; a core stalled on a full queue or a lost arbitration was screened by may_issue but is left
# out, so a replay checks that subset of the screened cores.
TraceEntry = namedtuple('TraceEntry', ['cycle', 'access_set', 'stalled'])


@dataclass(frozen=True)
class SimResult:
    cycles_elapsed: int
    per_core: Dict[int, CoreStats]
    per_bank_access: Tuple[Tuple[int, ...], ...]
    finished: bool
    trace: Optional[Tuple[TraceEntry, ...]] = field(default=None, compare=False)

    def cycles(self, core: int) -> int:
        """Cycles the core needed for its work quantum, or the whole run when it did not finish"""
        stats = self.per_core[core]
        return stats.finish_cycle + 1 if stats.finished else self.cycles_elapsed


class Simulation:
    """
    Cycle loop binding the regulation unit, the LLC banks and the cores.

    Each tick runs, in order: (1) regulator period tick, (2) cores top up their proposals, (3) regulation and
    bank arbitration, (4) bank service and completion delivery, (5) statistics.
    """

    def __init__(self, scenario: Scenario, record_trace: bool = False):
        self.scenario = scenario
        self.num_cores = scenario.regulator.num_cores
        self.regulator = regulation_unit_for(scenario)

        self.llc = SharedCache(scenario.llc)
        self.cores = {}
        for spec in scenario.cores:
            self.cores[spec.core_id] = CoreModel(
                spec.core_id, spec.workload, scenario.partition.region(spec.region), scenario.bank_map,
                seed=scenario.seed + spec.core_id, max_outstanding=spec.max_outstanding,
                region_offset=spec.region_offset)

        self.stall_reg = dict.fromkeys(self.cores, 0)
        self.stall_struct = dict.fromkeys(self.cores, 0)
        self.trace = [] if record_trace else None
        self.now = 0

    def _arbitrate(self, heads, contenders, now) -> Tuple[Set[int], Set[int], List[int]]:
        """
        Round-robin winner per bank among the cores may_issue admitted. Winners are admitted in ascending core
        order on a trial copy of the regulator; a winner refused there hands its bank to the bank's next
        candidate and the trial restarts, until no winner is refused.

        :return: granted cores, refused cores, cores stalled on a full queue or a lost arbitration
        """
        offset = now % self.num_cores
        order = {}
        structural = []
        for bank, candidates in contenders.items():
            if self.llc.banks[bank].has_room():
                order[bank] = sorted(candidates, key=lambda c: (c - offset) % self.num_cores)
            else:
                structural.extend(candidates)

        refused = set()
        while True:
            granted = set()
            for candidates in order.values():
                winner = next((c for c in candidates if c not in refused), None)
                if winner is not None:
                    granted.add(winner)

            trial = self.regulator.fork()
            newly_refused = set()
            for core_id in sorted(granted):
                bank = heads[core_id].bank
                if trial.may_issue(core_id, bank):
                    trial.record_access(core_id, bank)
                else:
                    newly_refused.add(core_id)
            if not newly_refused:
                break
            refused |= newly_refused

        for candidates in order.values():
            structural.extend(c for c in candidates if c not in granted and c not in refused)
        return granted, refused, structural

    def tick(self):
        now = self.now
        regulator = self.regulator

        regulator.tick()

        heads = {}
        for core_id, core in self.cores.items():
            core.next_issues(now)
            request = core.head()
            if request is not None:
                heads[core_id] = request

        screened_out = []
        contenders = {}
        for core_id, request in heads.items():
            if regulator.may_issue(core_id, request.bank):
                contenders.setdefault(request.bank, []).append(core_id)
            else:
                screened_out.append(core_id)

        granted, retried, structural = self._arbitrate(heads, contenders, now)

        # Same ascending order as the trial, so every grant passes again
        refused = []
        for core_id in sorted(granted | retried):
            request = heads[core_id]
            if core_id not in granted:
                if regulator.may_issue(core_id, request.bank):
                    # a later candidate took the bank
                    structural.append(core_id)
                else:
                    refused.append(core_id)
                continue
            if not regulator.may_issue(core_id, request.bank) or not self.llc.try_accept(request, now):
                raise EngineError('granted request of core {} to bank {} refused at cycle {}'.format(
                    core_id, request.bank, now))
            regulator.record_access(core_id, request.bank)
            self.cores[core_id].on_accept(request)

        for completion in self.llc.service(now):
            self.cores[completion.core].on_completion(completion)

        for core_id in screened_out:
            self.stall_reg[core_id] += 1
        for core_id in refused:
            self.stall_reg[core_id] += 1
        for core_id in structural:
            self.stall_struct[core_id] += 1

        if self.trace is not None and (screened_out or granted or refused):
            evaluated = screened_out + sorted(granted) + refused
            stalled = screened_out + refused
            self.trace.append(TraceEntry(
                now,
                frozenset((c, heads[c].bank) for c in evaluated),
                frozenset((c, heads[c].bank) for c in stalled),
            ))

        self.now += 1

    def finished(self) -> bool:
        measured = self.scenario.measured_core
        if measured is not None:
            return self.cores[measured].done
        bounded = [core for core in self.cores.values() if core.bounded]
        return bool(bounded) and all(core.done for core in bounded)

    def run(self) -> SimResult:
        max_cycles = self.scenario.max_cycles
        logger.info('Simulating %d cores, %d banks, policy %s, max %d cycles', len(self.cores),
                    self.scenario.llc.num_banks, self.scenario.regulator.policy.value, max_cycles)
        self.regulator.reset_monitors()

        done = self.finished()
        while not done and self.now < max_cycles:
            self.tick()
            done = self.finished()

        if not done:
            logger.warning('Run stopped at max_cycles=%d before the work quantum finished', max_cycles)
        else:
            logger.info('Run finished after %d cycles', self.now)
        return self.result(done)

    def result(self, finished: bool) -> SimResult:
        monitors = self.regulator.state.monitor_counters
        per_core = {}
        for core_id, core in self.cores.items():
            per_core[core_id] = CoreStats(
                core=core_id,
                domain=self.regulator.state.domain_of[core_id],
                completed=core.completed,
                accepted=core.accepted,
                stall_cycles_regulatory=self.stall_reg[core_id],
                stall_cycles_structural=self.stall_struct[core_id],
                finish_cycle=core.finish_cycle,
                finished=core.finish_cycle is not None,
            )
        return SimResult(
            cycles_elapsed=self.now,
            per_core=per_core,
            per_bank_access=tuple(tuple(row) for row in monitors),
            finished=finished,
            trace=tuple(self.trace) if self.trace is not None else None,
        )


def run(scenario: Scenario, record_trace: bool = False) -> SimResult:
    return Simulation(scenario, record_trace).run()


def slowdown(co_run: SimResult, solo: SimResult, core: int) -> float:
    """Co-run cycles over solo cycles of core for the same work quantum; not clamped"""
    for result, label in ((co_run, 'co-run'), (solo, 'solo')):
        stats = result.per_core.get(core)
        if stats is None or not stats.finished:
            raise EngineError('{} result has no finished work quantum for core {}'.format(label, core))
    return co_run.cycles(core) / solo.cycles(core)


def _initial_state(scenario: Scenario) -> RegulatorState:
    return regulation_unit_for(scenario).state


def _trace_by_cycle(result: SimResult) -> Dict[int, TraceEntry]:
    if result.trace is None:
        raise EngineError('result carries no trace; run with record_trace=True')
    return {entry.cycle: entry for entry in result.trace}


def replay_trace(scenario: Scenario, result: SimResult) -> List[str]:
    """
    Feed every cycle of the recorded regulator traffic through reference_step and compare stall decisions and
    the final monitor counters.

    :return: mismatch descriptions, empty when the run agrees with the reference cycle for cycle
    """
    entries = _trace_by_cycle(result)
    config = scenario.regulator
    state = _initial_state(scenario)
    empty = frozenset()
    mismatches = []

    for cycle in range(result.cycles_elapsed):
        entry = entries.get(cycle)
        access_set = entry.access_set if entry else empty
        stalled, state = reference_step(state, config, access_set)
        recorded = entry.stalled if entry else empty
        if stalled != recorded:
            mismatches.append('cycle {}: reference stalls {}, engine stalled {}'.format(
                cycle, sorted(stalled), sorted(recorded)))

    final = tuple(tuple(row) for row in state.monitor_counters)
    if final != result.per_bank_access:
        mismatches.append('monitor counters differ: reference {}, engine {}'.format(final, result.per_bank_access))
    return mismatches


def audit_budget(scenario: Scenario, result: SimResult) -> List[str]:
    """
    Count admitted accesses per regulation window and check them against the ABR of every domain whose cores
    are all regulated: per (domain, bank) under per-bank regulation, per domain under all-bank regulation.

    :return: violation descriptions, empty when every window respected its budget
    """
    config = scenario.regulator
    if config.policy is Policy.UNREGULATED:
        return []

    entries = _trace_by_cycle(result)
    audited = set()
    for domain in range(config.num_domains):
        members = [spec for spec in scenario.cores if spec.domain == domain]
        if members and all(spec.regulated for spec in members):
            audited.add(domain)

    budget = config.access_budget
    period_counter = 0
    window_start = 0
    per_bank = {}
    per_domain = {}
    violations = []

    for cycle in range(result.cycles_elapsed):
        if period_counter >= config.regulation_period:
            period_counter = 0
            window_start = cycle
            per_bank.clear()
            per_domain.clear()
        else:
            period_counter += 1

        entry = entries.get(cycle)
        if entry is None:
            continue
        for core, bank in entry.access_set - entry.stalled:
            domain = scenario.core(core).domain
            if domain not in audited:
                continue
            per_bank[domain, bank] = per_bank.get((domain, bank), 0) + 1
            per_domain[domain] = per_domain.get(domain, 0) + 1

            if config.policy is Policy.PER_BANK and per_bank[domain, bank] > budget[domain]:
                violations.append('window from cycle {}: domain {} bank {} admitted {} > ABR {}'.format(
                    window_start, domain, bank, per_bank[domain, bank], budget[domain]))
            if config.policy is Policy.ALL_BANK and per_domain[domain] > budget[domain]:
                violations.append('window from cycle {}: domain {} admitted {} > ABR {}'.format(
                    window_start, domain, per_domain[domain], budget[domain]))

    return violations
