import unittest

from address_map import BankMapConfig, Region, bank_of, in_partition
from cores import CoreModel, EngineError
from memory_subsystem import Completion
from workloads import (LayoutError, WorkloadKind, WorkloadSpec, build_bandwidth_layout, build_bkpll_layout,
                       build_mempress_layout)

KB = 1024
VICTIM = Region(0, 512 * KB)
BEST_EFFORT = Region(512 * KB, 1024 * KB)


class TestWorkloadSpec(unittest.TestCase):

    def test_defaults(self):
        bkpll = WorkloadSpec(WorkloadKind.BKPLL, wss=128 * KB).with_defaults(64)
        self.assertEqual((bkpll.mlp, bkpll.total_iterations), (8, 2048))
        self.assertTrue(bkpll.bounded)

        mempress = WorkloadSpec(WorkloadKind.MEMPRESS, wss=64 * KB).with_defaults(64)
        self.assertEqual((mempress.mlp, mempress.total_iterations), (4, 0))
        self.assertFalse(mempress.bounded)

    def test_explicit_values_kept(self):
        spec = WorkloadSpec(WorkloadKind.BANDWIDTH, mlp=2, total_iterations=10).with_defaults(64)
        self.assertEqual((spec.mlp, spec.total_iterations), (2, 10))

    def test_invalid(self):
        with self.assertRaises(LayoutError):
            WorkloadSpec(wss=0)
        with self.assertRaises(LayoutError):
            WorkloadSpec(mlp=0)
        with self.assertRaises(LayoutError):
            WorkloadSpec(total_iterations=-1)
        with self.assertRaises(LayoutError):
            WorkloadSpec(WorkloadKind.BANDWIDTH, target_bank=0)


class TestBkPllLayout(unittest.TestCase):

    def test_victim_layout_on_bank_zero(self):
        cfg = BankMapConfig(num_banks=2)
        spec = WorkloadSpec(WorkloadKind.BKPLL, wss=128 * KB, target_bank=0, mlp=8)
        chains = build_bkpll_layout(spec, VICTIM, cfg, seed=1)
        addrs = [addr for chain in chains for addr in chain]
        self.assertEqual(len(addrs), 2048)
        self.assertEqual(len(set(addrs)), 2048)
        self.assertTrue(all(addr & 0x40 == 0 for addr in addrs))
        self.assertTrue(all(in_partition(addr, VICTIM) and addr % 64 == 0 for addr in addrs))

    def test_chain_lengths_and_disjointness(self):
        cfg = BankMapConfig(num_banks=2)
        spec = WorkloadSpec(WorkloadKind.BKPLL, wss=64 * KB, target_bank=1, mlp=8)
        chains = build_bkpll_layout(spec, VICTIM, cfg, seed=3)
        self.assertEqual([len(chain) for chain in chains], [128] * 8)
        for i, first in enumerate(chains):
            for second in chains[i + 1:]:
                self.assertFalse(set(first) & set(second))
            self.assertEqual({bank_of(addr, cfg) for addr in first}, {1})

    def test_single_chain(self):
        spec = WorkloadSpec(WorkloadKind.BKPLL, wss=4 * KB, mlp=1)
        chains = build_bkpll_layout(spec, VICTIM, BankMapConfig(), seed=0)
        self.assertEqual(len(chains), 1)
        self.assertEqual(sorted(chains[0]), list(range(0, 4 * KB, 64)))

    def test_seeded(self):
        spec = WorkloadSpec(WorkloadKind.BKPLL, wss=16 * KB, mlp=4)
        cfg = BankMapConfig()
        self.assertEqual(build_bkpll_layout(spec, VICTIM, cfg, 7), build_bkpll_layout(spec, VICTIM, cfg, 7))
        self.assertNotEqual(build_bkpll_layout(spec, VICTIM, cfg, 7), build_bkpll_layout(spec, VICTIM, cfg, 8))

    def test_insufficient_lines(self):
        spec = WorkloadSpec(WorkloadKind.BKPLL, wss=512 * KB, target_bank=0)
        with self.assertRaises(LayoutError):
            build_bkpll_layout(spec, VICTIM, BankMapConfig(num_banks=2), seed=0)

    def test_unaligned_wss(self):
        with self.assertRaises(LayoutError):
            build_bkpll_layout(WorkloadSpec(WorkloadKind.BKPLL, wss=1000), VICTIM, BankMapConfig(), seed=0)


class TestOtherLayouts(unittest.TestCase):

    def test_bandwidth_sequential(self):
        cfg = BankMapConfig(num_banks=4)
        walk = build_bandwidth_layout(WorkloadSpec(WorkloadKind.BANDWIDTH, wss=128 * KB), BEST_EFFORT, cfg)
        self.assertEqual(walk, list(range(512 * KB, 640 * KB, 64)))
        counts = [sum(1 for addr in walk if bank_of(addr, cfg) == b) for b in range(4)]
        self.assertEqual(counts, [512] * 4)

    def test_bandwidth_stride(self):
        spec = WorkloadSpec(WorkloadKind.BANDWIDTH, wss=1 * KB, stride=256)
        walk = build_bandwidth_layout(spec, VICTIM, BankMapConfig())
        self.assertEqual(walk, [0, 256, 512, 768])

    def test_bandwidth_overrun(self):
        spec = WorkloadSpec(WorkloadKind.BANDWIDTH, wss=128 * KB)
        with self.assertRaises(LayoutError):
            build_bandwidth_layout(spec, BEST_EFFORT, BankMapConfig(), offset=448 * KB)

    def test_mempress_streams(self):
        cfg = BankMapConfig(num_banks=2)
        spec = WorkloadSpec(WorkloadKind.MEMPRESS, wss=64 * KB, target_bank=0, is_write=True)
        streams = build_mempress_layout(spec, BEST_EFFORT, cfg)
        self.assertEqual([len(s) for s in streams], [256] * 4)
        for stream in streams:
            self.assertEqual(stream, sorted(stream))
            self.assertEqual({bank_of(addr, cfg) for addr in stream}, {0})
        self.assertLess(streams[0][-1], streams[1][0])


def complete(core, request, finish_cycle):
    core.on_completion(Completion(core.core_id, request.tag, finish_cycle, request.bank, request.is_write))


class TestCoreModel(unittest.TestCase):

    def test_bkpll_proposes_one_per_chain(self):
        core = CoreModel(0, WorkloadSpec(WorkloadKind.BKPLL, wss=128 * KB, target_bank=0), VICTIM,
                         BankMapConfig(), seed=1)
        proposals = core.next_issues(0)
        self.assertEqual(len(proposals), 8)
        self.assertEqual([r.stream for r in proposals], list(range(8)))
        self.assertEqual([r.addr for r in proposals], [chain[0] for chain in core.chains])
        # nothing new until a chain's load returns
        self.assertEqual(core.next_issues(1), proposals)

    def test_chain_advances_on_completion(self):
        core = CoreModel(0, WorkloadSpec(WorkloadKind.BKPLL, wss=8 * KB, mlp=2), VICTIM, BankMapConfig(), seed=4)
        first = core.next_issues(0)
        head = core.head()
        self.assertIs(head, first[0])
        core.on_accept(head)
        self.assertEqual(len(core.in_flight), 1)

        complete(core, head, 20)
        self.assertEqual(core.in_flight, {})
        self.assertEqual(core.completed, 1)
        proposals = core.next_issues(21)
        self.assertEqual([r.addr for r in proposals], [core.chains[1][0], core.chains[0][1]])

    def test_mlp_one_is_serial(self):
        core = CoreModel(0, WorkloadSpec(WorkloadKind.BKPLL, wss=4 * KB, mlp=1), VICTIM, BankMapConfig())
        for now in range(5):
            proposals = core.next_issues(now)
            self.assertEqual(len(proposals), 1)
            core.on_accept(proposals[0])
            self.assertEqual(core.next_issues(now), [])
            complete(core, proposals[0], now)

    def test_bandwidth_window(self):
        spec = WorkloadSpec(WorkloadKind.BANDWIDTH, wss=4 * KB)
        core = CoreModel(0, spec, VICTIM, BankMapConfig(), max_outstanding=1)
        self.assertEqual(len(core.next_issues(0)), 1)
        core.on_accept(core.head())
        self.assertEqual(core.next_issues(1), [])

    def test_finished_workload_stops_proposing(self):
        spec = WorkloadSpec(WorkloadKind.BANDWIDTH, wss=4 * KB, total_iterations=2)
        core = CoreModel(0, spec, VICTIM, BankMapConfig())
        requests = core.next_issues(0)
        self.assertEqual([r.addr for r in requests], [0, 64])
        for request in requests:
            core.on_accept(request)
        complete(core, requests[0], 30)
        self.assertFalse(core.done)
        complete(core, requests[1], 31)
        self.assertTrue(core.done)
        self.assertEqual(core.finish_cycle, 31)
        self.assertEqual(core.next_issues(32), [])
        self.assertEqual(core.next_issues(33), [])

    def test_mempress_rotates_streams(self):
        spec = WorkloadSpec(WorkloadKind.MEMPRESS, wss=64 * KB, target_bank=0, is_write=True)
        core = CoreModel(1, spec, BEST_EFFORT, BankMapConfig())
        proposals = core.next_issues(0)
        self.assertEqual(len(proposals), 16)
        self.assertEqual([r.stream for r in proposals[:6]], [0, 1, 2, 3, 0, 1])
        self.assertTrue(all(r.is_write and r.bank == 0 for r in proposals))
        self.assertFalse(core.bounded)

    def test_unknown_completion(self):
        core = CoreModel(0, WorkloadSpec(WorkloadKind.BKPLL, wss=4 * KB), VICTIM, BankMapConfig())
        core.next_issues(0)
        with self.assertRaises(EngineError):
            core.on_completion(Completion(0, 99, 5, 0, False))
        with self.assertRaises(EngineError):
            core.on_completion(Completion(1, 0, 5, 0, False))

    def test_accept_out_of_order(self):
        core = CoreModel(0, WorkloadSpec(WorkloadKind.BKPLL, wss=4 * KB), VICTIM, BankMapConfig())
        proposals = core.next_issues(0)
        with self.assertRaises(EngineError):
            core.on_accept(proposals[1])


if __name__ == '__main__':
    unittest.main()
