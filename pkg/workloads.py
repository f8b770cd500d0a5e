import logging
from dataclasses import dataclass, replace
from enum import Enum
from math import gcd
from typing import List, Optional

import numpy as np

from address_map import BankMapConfig, Region, lines_in


logger = logging.getLogger('banksim')


class LayoutError(ValueError):
    pass


class WorkloadKind(Enum):
    BKPLL = 'bkpll'
    BANDWIDTH = 'bandwidth'
    MEMPRESS = 'mempress'


DEFAULT_MLP = {
    WorkloadKind.BKPLL: 8,
    WorkloadKind.BANDWIDTH: 1,
    WorkloadKind.MEMPRESS: 4,
}

DEFAULT_MAX_OUTSTANDING = {
    WorkloadKind.BKPLL: 8,
    WorkloadKind.BANDWIDTH: 8,
    WorkloadKind.MEMPRESS: 16,
}


@dataclass(frozen=True)
class WorkloadSpec:
    """
    kind        BkPll pointer chase, Bandwidth sequential sweep or Mempress multi-stream generator
    wss         bytes touched, a multiple of the line size
    target_bank confine every address to this bank (BkPll, Mempress)
    mlp         parallel chains (BkPll) or streams (Mempress)
    stride      step of the Bandwidth sweep, bytes
    total_iterations  accesses that make up the work quantum, 0 for unbounded; None takes the kind's default
    """
    kind: WorkloadKind = WorkloadKind.BKPLL
    wss: int = 128 * 1024
    target_bank: Optional[int] = None
    is_write: bool = False
    mlp: Optional[int] = None
    stride: int = 64
    total_iterations: Optional[int] = None

    def __post_init__(self):
        if self.wss <= 0:
            raise LayoutError('wss must be positive, got {}'.format(self.wss))
        if self.mlp is not None and self.mlp < 1:
            raise LayoutError('mlp must be >= 1, got {}'.format(self.mlp))
        if self.stride <= 0:
            raise LayoutError('stride must be positive, got {}'.format(self.stride))
        if self.total_iterations is not None and self.total_iterations < 0:
            raise LayoutError('total_iterations must be >= 0, got {}'.format(self.total_iterations))
        if self.kind is WorkloadKind.BANDWIDTH and self.target_bank is not None:
            raise LayoutError('a Bandwidth sweep cannot be confined to one bank')

    def with_defaults(self, line_size: int) -> 'WorkloadSpec':
        """Fill mlp and total_iterations; one pass over the WSS for BkPll and Bandwidth, unbounded for Mempress"""
        iterations = self.total_iterations
        if iterations is None:
            iterations = 0 if self.kind is WorkloadKind.MEMPRESS else self.wss // line_size
        return replace(self, mlp=self.mlp or DEFAULT_MLP[self.kind], total_iterations=iterations)

    @property
    def bounded(self) -> bool:
        return bool(self.total_iterations)


def _select_lines(spec: WorkloadSpec, region: Region, bank_cfg: BankMapConfig, offset: int) -> List[int]:
    if spec.wss % bank_cfg.line_size:
        raise LayoutError('wss {} is not a multiple of the {} byte line'.format(spec.wss, bank_cfg.line_size))
    if spec.target_bank is not None and not 0 <= spec.target_bank < bank_cfg.num_banks:
        raise LayoutError('target bank {} does not exist ({} banks)'.format(spec.target_bank, bank_cfg.num_banks))

    needed = spec.wss // bank_cfg.line_size
    lines = []
    for addr in lines_in(region, bank_cfg, spec.target_bank, offset):
        lines.append(addr)
        if len(lines) == needed:
            return lines

    raise LayoutError('region {:#x}..{:#x} (offset {:#x}) holds only {} of the {} lines needed{}'.format(
        region.base, region.limit, offset, len(lines), needed,
        '' if spec.target_bank is None else ' on bank {}'.format(spec.target_bank)))


def build_bkpll_layout(spec: WorkloadSpec, region: Region, bank_cfg: BankMapConfig, seed: int,
                       offset: int = 0) -> List[List[int]]:
    """
    Pointer chase layout: the working set, shuffled with a seeded permutation and dealt into mlp
    address-disjoint circular chains. A chain's next line is only known once its current access completes.
    """
    mlp = spec.mlp or DEFAULT_MLP[WorkloadKind.BKPLL]
    lines = _select_lines(spec, region, bank_cfg, offset)
    if mlp > len(lines):
        raise LayoutError('{} chains requested over {} lines'.format(mlp, len(lines)))

    rng = np.random.default_rng(seed)
    shuffled = [lines[i] for i in rng.permutation(len(lines))]
    chains = [shuffled[i::mlp] for i in range(mlp)]

    if logger.isEnabledFor(logging.DEBUG):
        logger.debug('BkPLL layout: %d chains of %d lines, bank %s', mlp, len(chains[0]), spec.target_bank)
    return chains


def build_bandwidth_layout(spec: WorkloadSpec, region: Region, bank_cfg: BankMapConfig,
                           offset: int = 0) -> List[int]:
    """Sequential sweep over wss bytes at stride; one full cycle of the walk, in order"""
    base = region.base + offset
    base += -base % bank_cfg.line_size
    if spec.wss % bank_cfg.line_size:
        raise LayoutError('wss {} is not a multiple of the {} byte line'.format(spec.wss, bank_cfg.line_size))
    if base + spec.wss > region.limit:
        raise LayoutError('sweep of {} bytes from {:#x} overruns region limit {:#x}'.format(
            spec.wss, base, region.limit))

    steps = spec.wss // gcd(spec.wss, spec.stride)
    walk = []
    for i in range(steps):
        addr = base + (i * spec.stride) % spec.wss
        walk.append(addr - addr % bank_cfg.line_size)
    return walk


def build_mempress_layout(spec: WorkloadSpec, region: Region, bank_cfg: BankMapConfig,
                          offset: int = 0) -> List[List[int]]:
    """Working set split into mlp contiguous streams, each walked in address order"""
    mlp = spec.mlp or DEFAULT_MLP[WorkloadKind.MEMPRESS]
    lines = _select_lines(spec, region, bank_cfg, offset)
    if mlp > len(lines):
        raise LayoutError('{} streams requested over {} lines'.format(mlp, len(lines)))
    return [[int(addr) for addr in part] for part in np.array_split(np.array(lines, dtype=np.int64), mlp)]
