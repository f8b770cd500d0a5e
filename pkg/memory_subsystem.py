import logging
from collections import deque, namedtuple
from dataclasses import dataclass
from typing import List, Optional


logger = logging.getLogger('banksim')


# One LLC access. bank is resolved from addr once, when the request is built.
Request = namedtuple('Request', ['core', 'addr', 'is_write', 'issue_cycle', 'tag', 'bank', 'stream'])

Completion = namedtuple('Completion', ['core', 'request_tag', 'finish_cycle', 'bank', 'is_write'])


@dataclass(frozen=True)
class LlcConfig:
    """
    Service model of the shared LLC. Every access hits; a bank is busy for bank_service_cycles per read
    (write_service_cycles per write) and hit_latency is added to every completion.
    """
    num_banks: int = 2
    bank_service_cycles: int = 4
    hit_latency: int = 20
    queue_depth: int = 8
    write_service_cycles: Optional[int] = None
    line_size: int = 64

    def __post_init__(self):
        if self.num_banks < 1:
            raise ValueError('num_banks must be >= 1, got {}'.format(self.num_banks))
        if self.bank_service_cycles < 1:
            raise ValueError('bank_service_cycles must be >= 1, got {}'.format(self.bank_service_cycles))
        if self.write_service_cycles is not None and self.write_service_cycles < 1:
            raise ValueError('write_service_cycles must be >= 1, got {}'.format(self.write_service_cycles))
        if self.hit_latency < 0:
            raise ValueError('hit_latency must be >= 0, got {}'.format(self.hit_latency))
        if self.queue_depth < 1:
            raise ValueError('queue_depth must be >= 1, got {}'.format(self.queue_depth))

    def service_cycles(self, is_write: bool) -> int:
        if is_write and self.write_service_cycles is not None:
            return self.write_service_cycles
        return self.bank_service_cycles

    def peak_bandwidth(self, clock_frequency: int) -> float:
        """Read bandwidth of one saturated bank, bytes per second"""
        return self.line_size * clock_frequency / self.bank_service_cycles


class CacheBank:
    """One LLC bank: a FIFO of accepted requests served one at a time"""

    def __init__(self, bank_id: int, cfg: LlcConfig):
        self.bank_id = bank_id
        self.cfg = cfg
        self.pending = deque()
        self.busy_until = 0
        self.last_accept = -1

    def has_room(self) -> bool:
        return len(self.pending) < self.cfg.queue_depth

    def try_accept(self, request: Request, now: int) -> bool:
        """
        Bank side of the ready-valid handshake.
        :return: False on a structural stall: queue full, or a request was already taken this cycle
        """
        if not self.has_room() or self.last_accept == now:
            return False
        self.pending.append(request)
        self.last_accept = now
        return True

    def service(self, now: int) -> List[Completion]:
        """Start the head request if the bank is free; its completion is due service + hit_latency later"""
        if now < self.busy_until or not self.pending:
            return []

        request = self.pending.popleft()
        occupancy = self.cfg.service_cycles(request.is_write)
        self.busy_until = now + occupancy
        return [Completion(request.core, request.tag, now + occupancy + self.cfg.hit_latency,
                           self.bank_id, request.is_write)]


class SharedCache:
    """The banks plus a contention-free interconnect that hands completions back when they are due"""

    def __init__(self, cfg: LlcConfig):
        self.cfg = cfg
        self.banks = [CacheBank(i, cfg) for i in range(cfg.num_banks)]
        self._due = {}
        self.outstanding = 0

    def try_accept(self, request: Request, now: int) -> bool:
        accepted = self.banks[request.bank].try_accept(request, now)
        if accepted:
            self.outstanding += 1
        return accepted

    def service(self, now: int) -> List[Completion]:
        """Serve every bank for this cycle and return the completions that finish at now, in bank order"""
        for bank in self.banks:
            for completion in bank.service(now):
                self._due.setdefault(completion.finish_cycle, []).append(completion)

        delivered = self._due.pop(now, [])
        self.outstanding -= len(delivered)
        return delivered
