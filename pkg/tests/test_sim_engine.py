import unittest

from address_map import BEST_EFFORT, VICTIM, BankMapConfig
from cores import EngineError
from memory_subsystem import LlcConfig
from regulator import Policy, RegulatorConfig
from sim_engine import (CoreSpec, CoreStats, Scenario, SimResult, Simulation, audit_budget, replay_trace, run,
                        slowdown)
from workloads import WorkloadKind, WorkloadSpec

KB = 1024

# Bank calibration of the regulated canned suites
FAST_BANKS = {'bank_service_cycles': 2, 'hit_latency': 16}


def victim():
    return CoreSpec(0, WorkloadSpec(WorkloadKind.BKPLL, wss=128 * KB, target_bank=0, mlp=8), domain=0,
                    region=VICTIM)


def attackers(banks=(0, 0)):
    return tuple(
        CoreSpec(core, WorkloadSpec(WorkloadKind.MEMPRESS, wss=64 * KB, target_bank=bank, is_write=True), domain=1,
                 regulated=True, region=BEST_EFFORT, region_offset=256 * KB * (core - 1))
        for core, bank in zip((1, 2), banks))


def scenario(cores, num_banks=2, policy=Policy.UNREGULATED, abr=32, rpr=400, max_cycles=10000000,
             measured_core=0, seed=1, fast=False):
    return Scenario(
        llc=LlcConfig(num_banks=num_banks, **(FAST_BANKS if fast else {})),
        bank_map=BankMapConfig(num_banks=num_banks),
        regulator=RegulatorConfig(policy=policy, regulation_period=rpr, num_domains=2,
                                  num_cores=max(c.core_id for c in cores) + 1, num_banks=num_banks,
                                  access_budget=(32, abr)),
        cores=tuple(cores),
        max_cycles=max_cycles,
        seed=seed,
        measured_core=measured_core,
    )


def bandwidth_scenario(num_banks, policy, abr=32):
    core = CoreSpec(0, WorkloadSpec(WorkloadKind.BANDWIDTH, wss=128 * KB, stride=64), domain=1, regulated=True,
                    region=BEST_EFFORT)
    return scenario([core], num_banks=num_banks, policy=policy, abr=abr, fast=True)


class TestScenario(unittest.TestCase):

    def test_bank_count_mismatch(self):
        with self.assertRaises(EngineError):
            Scenario(LlcConfig(num_banks=2), BankMapConfig(num_banks=4), RegulatorConfig(num_banks=2), (victim(),))

    def test_core_ids(self):
        with self.assertRaises(EngineError):
            scenario([victim(), victim()])
        with self.assertRaises(EngineError):
            Scenario(LlcConfig(), BankMapConfig(), RegulatorConfig(num_cores=1), (victim(),) + attackers())

    def test_domain_range(self):
        bad = CoreSpec(0, WorkloadSpec(), domain=2)
        with self.assertRaises(EngineError):
            scenario([bad])

    def test_measured_core_present(self):
        with self.assertRaises(EngineError):
            scenario([victim()], measured_core=3)


class TestRun(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.solo = run(scenario([victim()]))
        cls.same_bank = run(scenario((victim(),) + attackers((0, 0))))
        cls.diff_bank = run(scenario((victim(),) + attackers((1, 1))))

    def test_solo_completes_quantum(self):
        stats = self.solo.per_core[0]
        self.assertTrue(self.solo.finished)
        self.assertEqual(stats.completed, 2048)
        self.assertEqual(stats.stall_cycles_regulatory, 0)
        self.assertEqual(self.solo.cycles(0), stats.finish_cycle + 1)

    def test_monitor_conservation_and_confinement(self):
        for result in (self.solo, self.same_bank, self.diff_bank):
            for core, stats in result.per_core.items():
                self.assertEqual(sum(result.per_bank_access[core]), stats.accepted)
        self.assertEqual(self.solo.per_bank_access[0], (2048, 0))
        self.assertEqual(self.diff_bank.per_bank_access[1][0], 0)

    def test_diff_bank_no_slowdown(self):
        self.assertLessEqual(slowdown(self.diff_bank, self.solo, 0), 1.05)

    def test_same_bank_slowdown(self):
        self.assertGreater(self.same_bank.cycles(0), self.solo.cycles(0))
        self.assertGreaterEqual(slowdown(self.same_bank, self.solo, 0), 2.0)
        self.assertGreater(self.same_bank.per_core[0].stall_cycles_structural, 0)

    def test_regulation_off_matches_solo(self):
        for policy in (Policy.ALL_BANK, Policy.PER_BANK):
            result = run(scenario([victim()], policy=policy, abr=0))
            self.assertEqual(result.cycles(0), self.solo.cycles(0), policy)

    def test_deterministic(self):
        again = run(scenario((victim(),) + attackers((0, 0))))
        self.assertEqual(again, self.same_bank)


class TestRegulatedRuns(unittest.TestCase):

    def test_policies_identical_on_one_bank(self):
        results = {}
        for policy in (Policy.ALL_BANK, Policy.PER_BANK):
            setup = scenario((victim(),) + attackers((0, 0)), policy=policy, abr=32, fast=True)
            results[policy] = run(setup, record_trace=True)
            self.assertEqual(audit_budget(setup, results[policy]), [])
            self.assertEqual(replay_trace(setup, results[policy]), [])
        all_bank, per_bank = results[Policy.ALL_BANK], results[Policy.PER_BANK]
        self.assertEqual(all_bank.trace, per_bank.trace)
        self.assertEqual(all_bank.cycles(0), per_bank.cycles(0))

    def test_budget_throttles_attackers(self):
        solo = run(scenario([victim()], fast=True))
        low = scenario((victim(),) + attackers((0, 0)), policy=Policy.PER_BANK, abr=16, fast=True)
        result = run(low, record_trace=True)
        self.assertLessEqual(slowdown(result, solo, 0), 1.10)
        self.assertGreater(result.per_core[1].stall_cycles_regulatory, 0)
        self.assertEqual(result.per_core[0].stall_cycles_regulatory, 0)
        self.assertEqual(audit_budget(low, result), [])

    def test_per_bank_throughput_gain(self):
        for num_banks, expected in ((2, 2.0), (4, 4.0)):
            cycles = {}
            for policy in (Policy.ALL_BANK, Policy.PER_BANK):
                setup = bandwidth_scenario(num_banks, policy)
                result = run(setup, record_trace=True)
                self.assertTrue(result.finished)
                self.assertEqual(audit_budget(setup, result), [])
                cycles[policy] = result.cycles(0)
            gain = cycles[Policy.ALL_BANK] / cycles[Policy.PER_BANK]
            self.assertAlmostEqual(gain, expected, delta=0.1 * expected)

    def test_even_spread_histogram(self):
        result = run(bandwidth_scenario(4, Policy.UNREGULATED))
        counts = result.per_bank_access[0]
        self.assertLessEqual(max(counts) - min(counts), 1)
        self.assertEqual(sum(counts), 2048)

    def test_all_bank_refusal_replays(self):
        cores = [CoreSpec(c, WorkloadSpec(WorkloadKind.BANDWIDTH, wss=16 * KB), domain=1, regulated=True,
                          region=BEST_EFFORT, region_offset=64 * KB * c) for c in range(2)]
        setup = scenario(cores, policy=Policy.ALL_BANK, abr=3, rpr=10, measured_core=None, fast=True)
        result = run(setup, record_trace=True)
        self.assertTrue(result.finished)
        self.assertEqual(replay_trace(setup, result), [])
        self.assertEqual(audit_budget(setup, result), [])

    def test_coarse_period_admits_bursts(self):
        solo = run(scenario([victim()], fast=True))
        fine = run(scenario((victim(),) + attackers((0, 0)), policy=Policy.ALL_BANK, abr=32, rpr=400,
                            fast=True))
        coarse = run(scenario((victim(),) + attackers((0, 0)), policy=Policy.ALL_BANK, abr=79800,
                              rpr=1000000, fast=True))
        self.assertGreater(slowdown(coarse, solo, 0), slowdown(fine, solo, 0))


class TestArbitration(unittest.TestCase):

    @staticmethod
    def shared_budget():
        """Cores 0 and 1 share domain 1's one-access all-bank budget; unregulated core 2 shares bank 1 with core 1"""
        def writer(core, bank, domain, regulated):
            return CoreSpec(core, WorkloadSpec(WorkloadKind.MEMPRESS, wss=16 * KB, target_bank=bank),
                            domain=domain, regulated=regulated, region=BEST_EFFORT, region_offset=64 * KB * core)
        cores = [writer(0, 0, 1, True), writer(1, 1, 1, True), writer(2, 1, 0, False)]
        return scenario(cores, policy=Policy.ALL_BANK, abr=1, measured_core=None)

    def test_refused_winner_hands_bank_to_next_candidate(self):
        simulation = Simulation(self.shared_budget())
        simulation.tick()
        self.assertEqual({c: core.accepted for c, core in simulation.cores.items()}, {0: 1, 1: 0, 2: 1})
        self.assertEqual(simulation.stall_reg, {0: 0, 1: 1, 2: 0})
        self.assertEqual(simulation.stall_struct, {0: 0, 1: 0, 2: 0})
        self.assertEqual(simulation.llc.outstanding, 2)

    def test_handover_replays(self):
        setup = self.shared_budget()
        simulation = Simulation(setup, record_trace=True)
        for _ in range(1000):
            simulation.tick()
        result = simulation.result(False)
        self.assertEqual(replay_trace(setup, result), [])
        self.assertEqual(audit_budget(setup, result), [])
        self.assertGreater(result.per_core[1].stall_cycles_regulatory, 0)
        self.assertGreater(result.per_bank_access[2][1], result.per_bank_access[1][1])


class TestLimits(unittest.TestCase):

    def test_max_cycles(self):
        setup = scenario((victim(),) + attackers(), max_cycles=500)
        with self.assertLogs('banksim', 'WARNING'):
            result = Simulation(setup).run()
        self.assertFalse(result.finished)
        self.assertEqual(result.cycles_elapsed, 500)
        self.assertEqual(result.cycles(0), 500)
        with self.assertRaises(EngineError):
            slowdown(result, result, 0)

    def test_replay_needs_trace(self):
        setup = scenario([victim()], max_cycles=100)
        with self.assertRaises(EngineError):
            replay_trace(setup, run(setup))


def synthetic(finish_cycle, finished=True):
    stats = CoreStats(0, 0, 10, 10, 0, 0, finish_cycle, finished)
    return SimResult(finish_cycle + 1, {0: stats}, ((10,),), finished)


class TestSlowdown(unittest.TestCase):

    def test_identical(self):
        self.assertEqual(slowdown(synthetic(999), synthetic(999), 0), 1.0)

    def test_ratio(self):
        self.assertAlmostEqual(slowdown(synthetic(7039), synthetic(1999), 0), 3.52)

    def test_not_clamped(self):
        self.assertLess(slowdown(synthetic(999), synthetic(1999), 0), 1.0)

    def test_unfinished(self):
        with self.assertRaises(EngineError):
            slowdown(synthetic(999, finished=False), synthetic(999), 0)


if __name__ == '__main__':
    unittest.main()
