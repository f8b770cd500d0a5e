import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import floor
from typing import AbstractSet, FrozenSet, List, Optional, Sequence, Tuple


logger = logging.getLogger('banksim')

CoreId = int
BankId = int
DomainId = int

DEFAULT_ACCESS_BUDGET = 32  # 1.28GB/s at RPR 400, TS 16, 1GHz
DEFAULT_TRANSACTION_SIZE = 16
DEFAULT_CLOCK = 1000000000


class RegulatorError(Exception):
    pass


class RegisterError(RegulatorError):
    pass


class Policy(Enum):
    UNREGULATED = 'unregulated'
    ALL_BANK = 'all_bank'
    PER_BANK = 'per_bank'


class RegisterMap:
    """
    MMIO register layout, offsets in bytes, one 8 byte word per register:

        0x000                       RPR
        0x008 + d*8                 ABR[d]
        0x100 + c*8                 DAR[c]
        0x180 + c*8                 RER[c]
        0x200 + (d*nBanks + b)*8    BAC[d][b]       read only
        0x400 + (c*nBanks + b)*8    monitor[c][b]   read, write zero to reset
    """
    WORD = 8

    RPR = 0x000
    ABR = 0x008
    DAR = 0x100
    RER = 0x180
    BAC = 0x200
    MONITOR = 0x400

    MAX_DOMAINS = (DAR - ABR) // WORD
    MAX_CORES = (RER - DAR) // WORD
    MAX_BAC = (MONITOR - BAC) // WORD

    @classmethod
    def decode(cls, offset: int, config: 'RegulatorConfig') -> Tuple[str, Tuple[int, ...]]:
        """
        :param offset: byte offset into the register file
        :return: register name and its index tuple, e.g. ('BAC', (domain, bank))
        """
        if offset < 0 or offset % cls.WORD:
            raise RegisterError('Misaligned register offset: {:#x}'.format(offset))

        word = offset // cls.WORD
        if offset == cls.RPR:
            return 'RPR', ()
        if cls.ABR <= offset < cls.DAR:
            index = word - cls.ABR // cls.WORD
            if index < config.num_domains:
                return 'ABR', (index,)
        elif cls.DAR <= offset < cls.RER:
            index = word - cls.DAR // cls.WORD
            if index < config.num_cores:
                return 'DAR', (index,)
        elif cls.RER <= offset < cls.BAC:
            index = word - cls.RER // cls.WORD
            if index < config.num_cores:
                return 'RER', (index,)
        elif cls.BAC <= offset < cls.MONITOR:
            index = word - cls.BAC // cls.WORD
            if index < config.num_domains * config.num_banks:
                return 'BAC', divmod(index, config.num_banks)
        else:
            index = word - cls.MONITOR // cls.WORD
            if index < config.num_cores * config.num_banks:
                return 'MONITOR', divmod(index, config.num_banks)

        raise RegisterError('Unknown register offset: {:#x}'.format(offset))

    @classmethod
    def offset_of(cls, name: str, index: Tuple[int, ...], config: 'RegulatorConfig') -> int:
        if name == 'RPR':
            return cls.RPR
        if name == 'ABR':
            return cls.ABR + index[0] * cls.WORD
        if name == 'DAR':
            return cls.DAR + index[0] * cls.WORD
        if name == 'RER':
            return cls.RER + index[0] * cls.WORD
        if name == 'BAC':
            return cls.BAC + (index[0] * config.num_banks + index[1]) * cls.WORD
        if name == 'MONITOR':
            return cls.MONITOR + (index[0] * config.num_banks + index[1]) * cls.WORD
        raise RegisterError('Unknown register name: {}'.format(name))


@dataclass(frozen=True)
class RegulatorConfig:
    """
    Reset values of the regulation unit.

    access_budget holds one ABR per domain; a missing entry gets DEFAULT_ACCESS_BUDGET.
    Under per-bank regulation every bank of a domain gets that same budget.
    """
    policy: Policy = Policy.UNREGULATED
    regulation_period: int = 400
    num_domains: int = 2
    num_cores: int = 3
    num_banks: int = 2
    access_budget: Tuple[int, ...] = ()
    transaction_size: int = DEFAULT_TRANSACTION_SIZE
    clock_frequency: int = DEFAULT_CLOCK

    def __post_init__(self):
        if self.regulation_period < 1:
            raise RegulatorError('regulation_period must be >= 1, got {}'.format(self.regulation_period))
        if not 1 <= self.num_domains <= RegisterMap.MAX_DOMAINS:
            raise RegulatorError('num_domains must be in 1..{}, got {}'.format(
                RegisterMap.MAX_DOMAINS, self.num_domains))
        if not 1 <= self.num_cores <= RegisterMap.MAX_CORES:
            raise RegulatorError('num_cores must be in 1..{}, got {}'.format(RegisterMap.MAX_CORES, self.num_cores))
        if self.num_banks < 1 or self.num_domains * self.num_banks > RegisterMap.MAX_BAC:
            raise RegulatorError('num_domains * num_banks must be in 1..{}'.format(RegisterMap.MAX_BAC))
        if len(self.access_budget) > self.num_domains:
            raise RegulatorError('{} budgets given for {} domains'.format(len(self.access_budget), self.num_domains))

        budget = tuple(self.access_budget) + (DEFAULT_ACCESS_BUDGET,) * (self.num_domains - len(self.access_budget))
        if any(abr < 0 for abr in budget):
            raise RegulatorError('access_budget must be >= 0, got {}'.format(budget))
        object.__setattr__(self, 'access_budget', budget)

        if self.transaction_size < 1 or self.clock_frequency < 1:
            raise RegulatorError('transaction_size and clock_frequency must be positive')


class RegulatorState:
    """Register file and counters of one regulation unit"""

    def __init__(self, config: RegulatorConfig, domain_of: Optional[Sequence[DomainId]] = None,
                 regulation_enabled: Optional[Sequence[bool]] = None):
        self.regulation_period = config.regulation_period
        self.access_budget = list(config.access_budget)
        self.period_counter = 0
        self.bank_counters = [[0] * config.num_banks for _ in range(config.num_domains)]
        self.allbank_counters = [0] * config.num_domains
        self.domain_of = list(domain_of) if domain_of is not None else [0] * config.num_cores
        self.regulation_enabled = [bool(i) for i in regulation_enabled] if regulation_enabled is not None \
            else [False] * config.num_cores
        self.monitor_counters = [[0] * config.num_banks for _ in range(config.num_cores)]

        if len(self.domain_of) != config.num_cores or len(self.regulation_enabled) != config.num_cores:
            raise RegulatorError('DAR/RER must have one entry per core ({})'.format(config.num_cores))
        for core, domain in enumerate(self.domain_of):
            if not 0 <= domain < config.num_domains:
                raise RegulatorError('core {} assigned to unknown domain {}'.format(core, domain))

    def copy(self) -> 'RegulatorState':
        clone = object.__new__(RegulatorState)
        clone.regulation_period = self.regulation_period
        clone.access_budget = list(self.access_budget)
        clone.period_counter = self.period_counter
        clone.bank_counters = [list(row) for row in self.bank_counters]
        clone.allbank_counters = list(self.allbank_counters)
        clone.domain_of = list(self.domain_of)
        clone.regulation_enabled = list(self.regulation_enabled)
        clone.monitor_counters = [list(row) for row in self.monitor_counters]
        return clone

    def snapshot(self) -> tuple:
        return (
            self.regulation_period,
            tuple(self.access_budget),
            self.period_counter,
            tuple(map(tuple, self.bank_counters)),
            tuple(self.allbank_counters),
            tuple(self.domain_of),
            tuple(self.regulation_enabled),
            tuple(map(tuple, self.monitor_counters)),
        )

    def __eq__(self, other):
        if not isinstance(other, RegulatorState):
            return NotImplemented
        return self.snapshot() == other.snapshot()

    def __repr__(self):
        return 'RegulatorState(period_counter={}, bank_counters={}, allbank_counters={})'.format(
            self.period_counter, self.bank_counters, self.allbank_counters)


def _check_index(config: RegulatorConfig, core: CoreId, bank: BankId):
    if not 0 <= core < config.num_cores:
        raise RegulatorError('core {} out of range, regulator has {} cores'.format(core, config.num_cores))
    if not 0 <= bank < config.num_banks:
        raise RegulatorError('bank {} out of range, regulator has {} banks'.format(bank, config.num_banks))


def tick(state: RegulatorState, config: RegulatorConfig):
    """Advance the period counter; replenish every budget when the period has elapsed"""
    if state.period_counter >= state.regulation_period:
        state.period_counter = 0
        for counters in state.bank_counters:
            for bank in range(len(counters)):
                counters[bank] = 0
        for domain in range(len(state.allbank_counters)):
            state.allbank_counters[domain] = 0
    else:
        state.period_counter += 1


def may_issue(state: RegulatorState, config: RegulatorConfig, core: CoreId, bank: BankId) -> bool:
    """
    :return: False when the core's access to bank must be stalled (ready and valid forced low)
    """
    _check_index(config, core, bank)
    if not state.regulation_enabled[core] or config.policy is Policy.UNREGULATED:
        return True

    domain = state.domain_of[core]
    if config.policy is Policy.PER_BANK:
        return state.bank_counters[domain][bank] < state.access_budget[domain]
    return state.allbank_counters[domain] < state.access_budget[domain]


def record_access(state: RegulatorState, config: RegulatorConfig, core: CoreId, bank: BankId):
    """Charge one completed handshake to the domain budgets and the core's monitor"""
    _check_index(config, core, bank)
    domain = state.domain_of[core]
    state.bank_counters[domain][bank] += 1
    state.allbank_counters[domain] += 1
    state.monitor_counters[core][bank] += 1


def reference_step(state: RegulatorState, config: RegulatorConfig,
                   access_set: AbstractSet[Tuple[CoreId, BankId]]) -> Tuple[FrozenSet[Tuple[CoreId, BankId]],
                                                                             RegulatorState]:
    """
    One cycle of the regulation and monitoring algorithms written out loop by loop.
    Slow on purpose; it is the oracle the fast path is checked against.

    :param access_set: (core, bank) pairs presenting an access this cycle
    :return: stalled pairs and the successor state; the input state is left untouched
    """
    new = state.copy()

    if new.period_counter >= new.regulation_period:
        new.period_counter = 0
        for d in range(config.num_domains):
            for j in range(config.num_banks):
                new.bank_counters[d][j] = 0
            new.allbank_counters[d] = 0
    else:
        new.period_counter = new.period_counter + 1

    stall = {}
    for i in range(config.num_cores):
        for j in range(config.num_banks):
            stall[i, j] = False
            access_is_bank = (i, j) in access_set
            domain = new.domain_of[i]

            if config.policy is Policy.PER_BANK:
                depleted = new.bank_counters[domain][j] >= new.access_budget[domain]
            elif config.policy is Policy.ALL_BANK:
                depleted = new.allbank_counters[domain] >= new.access_budget[domain]
            else:
                depleted = False

            if depleted and access_is_bank and new.regulation_enabled[i]:
                stall[i, j] = True

            if access_is_bank and not stall[i, j]:
                new.bank_counters[domain][j] = new.bank_counters[domain][j] + 1
                new.allbank_counters[domain] = new.allbank_counters[domain] + 1

    for i in range(config.num_cores):
        for j in range(config.num_banks):
            core_access = (i, j) in access_set and not stall[i, j]
            if core_access:
                new.monitor_counters[i][j] = new.monitor_counters[i][j] + 1

    return frozenset(key for key, stalled in stall.items() if stalled), new


def register_read(state: RegulatorState, config: RegulatorConfig, offset: int) -> int:
    name, index = RegisterMap.decode(offset, config)
    if name == 'RPR':
        return state.regulation_period
    if name == 'ABR':
        return state.access_budget[index[0]]
    if name == 'DAR':
        return state.domain_of[index[0]]
    if name == 'RER':
        return int(state.regulation_enabled[index[0]])
    if name == 'BAC':
        return state.bank_counters[index[0]][index[1]]
    return state.monitor_counters[index[0]][index[1]]


def register_write(state: RegulatorState, config: RegulatorConfig, offset: int, value: int):
    name, index = RegisterMap.decode(offset, config)
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug('Register write %s%s <- %s', name, list(index), value)

    if name == 'RPR':
        if value < 1:
            raise RegisterError('RPR must be >= 1, got {}'.format(value))
        state.regulation_period = value
        state.period_counter = min(state.period_counter, value)
    elif name == 'ABR':
        if value < 0:
            raise RegisterError('ABR must be >= 0, got {}'.format(value))
        state.access_budget[index[0]] = value
    elif name == 'DAR':
        if not 0 <= value < config.num_domains:
            raise RegisterError('DAR value {} is not a domain (0..{})'.format(value, config.num_domains - 1))
        state.domain_of[index[0]] = value
    elif name == 'RER':
        if value not in (0, 1):
            raise RegisterError('RER takes 0 or 1, got {}'.format(value))
        state.regulation_enabled[index[0]] = bool(value)
    elif value != 0:
        raise RegisterError('{}{} is read only, only a zero write (reset) is accepted'.format(name, list(index)))
    elif name == 'BAC':
        state.bank_counters[index[0]][index[1]] = 0
    else:
        state.monitor_counters[index[0]][index[1]] = 0


def effective_period(rpr: int) -> int:
    """Cycles per window: the counter is compared before it is incremented, so RPR P spans P + 1 cycles"""
    return rpr + 1


def bandwidth_of(abr: int, rpr: int, ts: int, f: int) -> int:
    """
    Bandwidth budget of one bank, in bytes per second: (ABR / RPR) * TS * f.

    >>> bandwidth_of(16, 400, 16, 10 ** 9)
    640000000
    """
    if rpr < 1:
        raise RegulatorError('regulation period must be >= 1, got {}'.format(rpr))
    return round(Fraction(abr, rpr) * ts * Fraction(f))


def abr_for_bandwidth(bandwidth: int, rpr: int, ts: int, f: int) -> int:
    """Largest ABR whose bandwidth_of does not exceed bandwidth"""
    if ts < 1 or f <= 0:
        raise RegulatorError('transaction size and frequency must be positive')
    return floor(Fraction(bandwidth) * rpr / (ts * Fraction(f)))


class RegulationUnit:
    """
    The regulation unit of one simulation: register file, period counter, per-domain budgets and per-core monitors.

    The engine drives it once per cycle: tick, then may_issue for each presented access, then record_access for
    each access the bank took.
    """

    def __init__(self, config: RegulatorConfig, domain_of: Optional[Sequence[DomainId]] = None,
                 regulation_enabled: Optional[Sequence[bool]] = None):
        self.config = config
        self.state = RegulatorState(config, domain_of, regulation_enabled)

    def tick(self):
        tick(self.state, self.config)

    def may_issue(self, core: CoreId, bank: BankId) -> bool:
        return may_issue(self.state, self.config, core, bank)

    def record_access(self, core: CoreId, bank: BankId):
        record_access(self.state, self.config, core, bank)

    def register_read(self, offset: int) -> int:
        return register_read(self.state, self.config, offset)

    def register_write(self, offset: int, value: int):
        register_write(self.state, self.config, offset, value)

    def reset_monitors(self):
        for core in range(self.config.num_cores):
            for bank in range(self.config.num_banks):
                self.register_write(RegisterMap.offset_of('MONITOR', (core, bank), self.config), 0)

    def monitor(self, core: CoreId) -> List[int]:
        return list(self.state.monitor_counters[core])

    def fork(self) -> 'RegulationUnit':
        """Unit over a copy of this unit's state, for trial admissions within one cycle"""
        clone = object.__new__(RegulationUnit)
        clone.config = self.config
        clone.state = self.state.copy()
        return clone

    def registers(self) -> List[Tuple[int, str, int]]:
        """Every mapped register as (offset, name, value), in offset order"""
        config = self.config
        names = [('RPR', ())]
        names += [('ABR', (d,)) for d in range(config.num_domains)]
        names += [('DAR', (c,)) for c in range(config.num_cores)]
        names += [('RER', (c,)) for c in range(config.num_cores)]
        names += [('BAC', (d, b)) for d in range(config.num_domains) for b in range(config.num_banks)]
        names += [('MONITOR', (c, b)) for c in range(config.num_cores) for b in range(config.num_banks)]

        result = []
        for name, index in names:
            offset = RegisterMap.offset_of(name, index, config)
            label = name + ''.join('[{}]'.format(i) for i in index)
            result.append((offset, label, self.register_read(offset)))
        return result
