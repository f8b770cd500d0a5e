import logging
from collections import deque
from typing import Dict, List, Optional

from address_map import BankMapConfig, Region, bank_of
from memory_subsystem import Completion, Request
from workloads import (DEFAULT_MAX_OUTSTANDING, WorkloadSpec, build_bandwidth_layout, build_bkpll_layout,
                       build_mempress_layout)


logger = logging.getLogger('banksim')


class EngineError(RuntimeError):
    pass


class CoreModel:
    """
    A core reduced to its memory requests: a window of at most max_outstanding requests driven by one workload.

    Requests the core wants to send wait in `pending` (oldest first) until the engine gets one accepted;
    accepted ones sit in `in_flight` until their completion comes back. A request blocked by the regulator or
    by a bank stays pending and is presented again next cycle.
    """

    def __init__(self, core_id: int, workload: WorkloadSpec, region: Region, bank_cfg: BankMapConfig,
                 seed: int = 0, max_outstanding: Optional[int] = None, region_offset: int = 0):
        self.core_id = core_id
        self.workload = workload.with_defaults(bank_cfg.line_size)
        self.max_outstanding = max_outstanding or DEFAULT_MAX_OUTSTANDING[self.workload.kind]
        self.region = region
        self.bank_cfg = bank_cfg

        self.pending = deque()
        self.in_flight: Dict[int, Request] = {}
        self.completed = 0
        self.accepted = 0
        self.issued = 0
        self.finish_cycle = None
        self._next_tag = 0

        kind = self.workload.kind.value
        getattr(self, '_layout_{}'.format(kind))(region, bank_cfg, seed, region_offset)
        self._propose = getattr(self, '_propose_{}'.format(kind))
        self._advance = getattr(self, '_advance_{}'.format(kind))

    @property
    def bounded(self) -> bool:
        return self.workload.bounded

    @property
    def done(self) -> bool:
        return self.bounded and self.completed >= self.workload.total_iterations

    def _work_left(self) -> bool:
        return not self.bounded or self.issued < self.workload.total_iterations

    def _window_left(self) -> int:
        return self.max_outstanding - len(self.in_flight) - len(self.pending)

    def _make_request(self, addr: int, now: int, stream: int) -> Request:
        request = Request(self.core_id, addr, self.workload.is_write, now, self._next_tag,
                          bank_of(addr, self.bank_cfg), stream)
        self._next_tag += 1
        self.issued += 1
        self.pending.append(request)
        return request

    def next_issues(self, now: int) -> List[Request]:
        """
        Top up the proposals to the window and return every request waiting to be accepted, oldest first.
        """
        if self._window_left() > 0 and self._work_left():
            self._propose(now)
        return list(self.pending)

    def head(self) -> Optional[Request]:
        """The request on the core's channel this cycle"""
        return self.pending[0] if self.pending else None

    def on_accept(self, request: Request):
        if not self.pending or self.pending[0] is not request:
            raise EngineError('core {} accepted a request that is not its head: {}'.format(self.core_id, request))
        self.pending.popleft()
        self.in_flight[request.tag] = request
        self.accepted += 1

    def on_completion(self, completion: Completion):
        if completion.core != self.core_id:
            raise EngineError('completion for core {} delivered to core {}'.format(completion.core, self.core_id))
        request = self.in_flight.pop(completion.request_tag, None)
        if request is None:
            raise EngineError('core {} got a completion for unknown tag {}'.format(
                self.core_id, completion.request_tag))

        self.completed += 1
        self._advance(request)
        if self.finish_cycle is None and self.done:
            self.finish_cycle = completion.finish_cycle

    # layouts, proposals and completions per workload kind

    def _layout_bkpll(self, region, bank_cfg, seed, offset):
        self.chains = build_bkpll_layout(self.workload, region, bank_cfg, seed, offset)
        self._chain_pos = [0] * len(self.chains)
        self._chain_busy = [False] * len(self.chains)

    def _propose_bkpll(self, now):
        """the next pointer of every chain whose previous load has come back"""
        for chain, lines in enumerate(self.chains):
            if self._window_left() <= 0 or not self._work_left():
                return
            if not self._chain_busy[chain]:
                self._chain_busy[chain] = True
                self._make_request(lines[self._chain_pos[chain]], now, chain)

    def _advance_bkpll(self, request):
        chain = request.stream
        self._chain_pos[chain] = (self._chain_pos[chain] + 1) % len(self.chains[chain])
        self._chain_busy[chain] = False

    def _layout_bandwidth(self, region, bank_cfg, seed, offset):
        self.walk = build_bandwidth_layout(self.workload, region, bank_cfg, offset)
        self._cursor = 0

    def _propose_bandwidth(self, now):
        while self._window_left() > 0 and self._work_left():
            self._make_request(self.walk[self._cursor], now, 0)
            self._cursor = (self._cursor + 1) % len(self.walk)

    def _advance_bandwidth(self, request):
        pass

    def _layout_mempress(self, region, bank_cfg, seed, offset):
        self.streams = build_mempress_layout(self.workload, region, bank_cfg, offset)
        self._stream_pos = [0] * len(self.streams)
        self._next_stream = 0

    def _propose_mempress(self, now):
        while self._window_left() > 0 and self._work_left():
            stream = self._next_stream
            lines = self.streams[stream]
            self._make_request(lines[self._stream_pos[stream]], now, stream)
            self._stream_pos[stream] = (self._stream_pos[stream] + 1) % len(lines)
            self._next_stream = (stream + 1) % len(self.streams)

    def _advance_mempress(self, request):
        pass
