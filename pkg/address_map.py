import logging
from collections import namedtuple
from dataclasses import dataclass
from typing import Iterator, Optional


logger = logging.getLogger('banksim')

PhysAddr = int
BankId = int

VICTIM = 'victim'
BEST_EFFORT = 'best_effort'


class AddressMapError(ValueError):
    pass


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class BankMapConfig:
    """
    Flat bank mapping: log2(num_banks) contiguous address bits starting at start_bit select the bank.

    start_bit 6 with 64 byte lines is the simulated LLC; start_bit 4 with 8 banks covers the A72 tag-bank bits.
    """
    start_bit: int = 6
    num_banks: int = 2
    line_size: int = 64

    def __post_init__(self):
        if self.num_banks not in (1, 2, 4, 8):
            raise AddressMapError('num_banks must be one of 1, 2, 4, 8, got {}'.format(self.num_banks))
        if self.start_bit < 0:
            raise AddressMapError('start_bit must be >= 0, got {}'.format(self.start_bit))
        if not is_power_of_two(self.line_size):
            raise AddressMapError('line_size must be a power of two, got {}'.format(self.line_size))

    @property
    def period(self) -> int:
        """Address distance after which the bank pattern repeats"""
        return self.num_banks << self.start_bit


class Region(namedtuple('Region', ['base', 'limit'])):
    """Half-open byte range [base, limit)"""
    __slots__ = ()

    @property
    def size(self) -> int:
        return self.limit - self.base

    def overlaps(self, other: 'Region') -> bool:
        return self.base < other.limit and other.base < self.limit


@dataclass(frozen=True)
class PartitionConfig:
    """
    Set partitioning by construction: the victim and the best-effort cores allocate from disjoint regions.
    Defaults are the two 512KB halves of a 1MB LLC.
    """
    victim_region: Region = Region(0, 512 * 1024)
    best_effort_region: Region = Region(512 * 1024, 1024 * 1024)

    def __post_init__(self):
        for name in (VICTIM, BEST_EFFORT):
            region = self.region(name)
            if region.base < 0 or region.limit <= region.base:
                raise AddressMapError('{} region is empty or negative: {}'.format(name, region))
        if self.victim_region.overlaps(self.best_effort_region):
            raise AddressMapError('victim region {} overlaps best-effort region {}'.format(
                self.victim_region, self.best_effort_region))

    def region(self, name: str) -> Region:
        if name == VICTIM:
            return self.victim_region
        if name == BEST_EFFORT:
            return self.best_effort_region
        raise AddressMapError('unknown region {!r}'.format(name))


def bank_of(addr: PhysAddr, cfg: BankMapConfig) -> BankId:
    return (addr >> cfg.start_bit) % cfg.num_banks


def in_partition(addr: PhysAddr, region: Region) -> bool:
    return region.base <= addr < region.limit


def lines_in(region: Region, cfg: BankMapConfig, target_bank: Optional[BankId] = None,
             offset: int = 0) -> Iterator[PhysAddr]:
    """
    Line addresses of region in ascending order, from base + offset.

    :param target_bank: only yield lines that map to this bank
    :param offset: byte offset into the region, rounded up to a line
    """
    start = region.base + offset
    start += -start % cfg.line_size
    for addr in range(start, region.limit - cfg.line_size + 1, cfg.line_size):
        if target_bank is None or bank_of(addr, cfg) == target_bank:
            yield addr
