import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APIClient

from core.checks import CheckReport
from core.exceptions import ConfigError, CouplingRelationError
from diagnostics.services import StepSeries
from field_grid.grids import Grid
from .config import parse_config
from .models import DiagnosticRecord, ExperimentRun
from .plotting import emit_svg, envelope
from .rates import DEGENERATE, NONPOSITIVE, TOO_FEW_POINTS, RateTable, fit_slope
from .registry import CHECK_NAMES, CHECKS, non_concentration_report, select_checks
from .services import (
    BUDGET_SPREAD, DERIVATIVE_BUDGET, FLUX_SWAP, NU_ARM, TERMINAL_RATIO, VELOCITY_GAP, arm_members, cmd_convergence,
    cmd_diagnose, cmd_run, finish_record, nu_sweep_checks, simulate,
)

MINIMAL = """
scenario: minimal
grid: {cells: 256}
law: {gamma: 3, nu: 1.0e-3}
datum: {shape: bump}
horizon: 0.5
"""

SMALL = """
scenario: small
grid: {cells: 32, length: 6.0}
law: {family: power, gamma: 2, nu: 5.0e-2}
datum: {shape: bump, height: 0.5, width: 0.8}
horizon: 0.05
observer_times: [0.025]
controls: {max_dt: 5.0e-3}
"""


def small_config(extra='', out=None):
    text = SMALL + extra
    if out is not None:
        text += f"\noutput_dir: {out}\n"
    return parse_config(text)


def write_config(directory, text):
    path = Path(directory) / 'config.yaml'
    path.write_text(text)
    return str(path)


class ConfigTests(SimpleTestCase):

    def test_minimal_config(self):
        config = parse_config(MINIMAL)
        self.assertEqual(config.grid.cells, 256)
        self.assertEqual(config.law.gamma, 3.0)
        self.assertEqual(config.law.nu, 1e-3)
        self.assertEqual(config.datum.shape, 'bump')
        self.assertEqual(config.diagnostics, CHECK_NAMES)
        self.assertEqual(config.snapshot_times(), (0.0, 0.5))

    def test_unknown_key_names_the_nearest_key(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL.replace('gamma: 3', 'gamm: 3'))
        self.assertTrue(any(e.startswith('law.gamm:') and "'gamma'" in e for e in ctx.exception.errors),
                        ctx.exception.errors)

    def test_sweep_list(self):
        config = parse_config(MINIMAL + "sweep:\n  nu: [1.0e-1, 1.0e-2, 1.0e-3]\n")
        self.assertEqual(config.sweep.nu, (0.1, 0.01, 0.001))
        self.assertEqual(config.sweep.reference_gamma, 80.0)

    def test_every_problem_is_reported(self):
        text = MINIMAL.replace('cells: 256', 'cells: many').replace('horizon: 0.5', '')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        paths = [e.split(':')[0] for e in ctx.exception.errors]
        self.assertIn('grid.cells', paths)
        self.assertIn('horizon', paths)

    def test_nested_list_errors_carry_the_index(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL + "sweep:\n  gamma: [5, 0.5]\n")
        self.assertTrue(any(e.startswith('sweep.gamma[1]:') for e in ctx.exception.errors), ctx.exception.errors)

    def test_power_law_needs_gamma(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL.replace('gamma: 3, ', ''))
        self.assertTrue(any(e.startswith('law.gamma:') for e in ctx.exception.errors))

    def test_yaml_errors(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config("grid: [unclosed")
        self.assertTrue(ctx.exception.errors[0].startswith('yaml:'))
        with self.assertRaises(ConfigError):
            parse_config("- just\n- a list\n")

    def test_observer_times_after_horizon(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL + "observer_times: [0.7]\n")
        self.assertTrue(any(e.startswith('observer_times:') for e in ctx.exception.errors))

    def test_typed_values_recheck_their_ranges(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL + "controls: {cfl_fraction: 2.0}\n")
        self.assertTrue(any(e.startswith('controls') for e in ctx.exception.errors))

    def test_digest_tracks_the_content(self):
        self.assertEqual(parse_config(MINIMAL).digest(), parse_config(MINIMAL).digest())
        self.assertNotEqual(parse_config(MINIMAL).digest(),
                            parse_config(MINIMAL.replace('0.5', '0.25')).digest())

    def test_two_species_config(self):
        config = parse_config(MINIMAL.replace('{shape: bump}', '{shape: two_species, species_g0: 2.0}'))
        law = config.build_law()
        data = config.build_data()
        self.assertEqual(data.species, 2)
        self.assertEqual(len(law.species_growth), 2)
        self.assertEqual(float(law.growth_for(1)(0.0)), 2.0)

    def test_two_bumps_carry_twice_the_mass(self):
        one = parse_config(MINIMAL).build_data().mass()
        two = parse_config(MINIMAL.replace('{shape: bump}', '{shape: two_bumps, separation: 2.0}'))
        self.assertAlmostEqual(two.build_data().mass(), 2 * one, places=10)

    def test_log_law_needs_positive_nu(self):
        with self.assertRaises(ConfigError):
            parse_config(MINIMAL.replace('{gamma: 3, nu: 1.0e-3}', '{family: log, nu: 0.0}'))
        law = parse_config(MINIMAL.replace('{gamma: 3, nu: 1.0e-3}', '{family: log, nu: 1.0}')).build_law()
        self.assertEqual(law.family, 'log')

    def test_boundaries_are_neumann_or_periodic(self):
        self.assertEqual(parse_config(MINIMAL.replace('{cells: 256}', '{cells: 256, boundary: periodic}'))
                         .build_grid().periodic, True)
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL.replace('{cells: 256}', '{cells: 256, boundary: dirichlet}'))
        self.assertTrue(any(e.startswith('grid.boundary:') for e in ctx.exception.errors), ctx.exception.errors)

    def test_incompressible_law_runs_through_the_darcy_proxy(self):
        config = parse_config(MINIMAL.replace('law: {gamma: 3, nu: 1.0e-3}',
                                              'model: darcy\nlaw: {family: incompressible, nu: 0}'))
        self.assertEqual(config.build_law().family, 'incompressible')
        law = config.stepper_law()
        self.assertEqual((law.family, law.gamma, law.nu), ('power', 80.0, 0.0))
        self.assertEqual(config.stepper_law(gamma=20).gamma, 20.0)

    def test_incompressible_law_cannot_drive_brinkman(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(MINIMAL.replace('{gamma: 3, nu: 1.0e-3}', '{family: incompressible, nu: 0}'))
        self.assertTrue(any(e.startswith('law.family:') and 'brinkman' in e for e in ctx.exception.errors),
                        ctx.exception.errors)

    def test_incompressible_law_needs_zero_nu_and_data_below_one(self):
        darcy = MINIMAL.replace('law: {gamma: 3, nu: 1.0e-3}', 'model: darcy\nlaw: {family: incompressible, nu: 0}')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(darcy.replace('nu: 0}', 'nu: 0.1}'))
        self.assertTrue(any(e.startswith('law.nu:') for e in ctx.exception.errors), ctx.exception.errors)
        with self.assertRaises(ConfigError) as ctx:
            parse_config(darcy.replace('{shape: bump}', '{shape: bump, height: 1.5}'))
        self.assertTrue(any(e.startswith('datum:') for e in ctx.exception.errors), ctx.exception.errors)

    def test_comparison_times_refine_the_snapshots(self):
        config = small_config()
        times = config.comparison_times()
        self.assertEqual(len(times), 17)
        self.assertTrue(set(config.snapshot_times()) <= set(times))
        self.assertEqual(list(times), sorted(times))
        self.assertEqual(len(config.comparison_times(4)), 5)
        for got, want in zip(config.comparison_times(4), (0.0, 0.0125, 0.025, 0.0375, 0.05)):
            self.assertAlmostEqual(got, want, places=15)

    def test_shipped_fixtures_parse(self):
        root = Path(__file__).resolve().parent / 'fixtures'
        for path in [root / 'example.yaml', *sorted((root / 'acceptance').glob('*.yaml'))]:
            with self.subTest(path=path.name):
                parse_config(path.read_text())


class RateTests(SimpleTestCase):

    def test_exact_power_law(self):
        nus = [1e-1, 1e-2, 1e-3]
        slope, lo, hi, flag = fit_slope(nus, [3.0 * nu ** 0.5 for nu in nus])
        self.assertEqual(flag, '')
        self.assertAlmostEqual(slope, 0.5, places=10)
        self.assertLessEqual(lo, slope)
        self.assertGreaterEqual(hi, slope)

    def test_refuses_to_fit_two_points(self):
        slope, _, _, flag = fit_slope([1e-1, 1e-2], [1.0, 0.5])
        self.assertEqual(flag, TOO_FEW_POINTS)
        self.assertTrue(math.isnan(slope))

    def test_identical_runs_have_no_slope(self):
        self.assertEqual(fit_slope([1e-1, 1e-2, 1e-3], [0.0, 0.0, 0.0])[3], NONPOSITIVE)
        self.assertEqual(fit_slope([1e-1, 1e-1, 1e-1], [1.0, 1.0, 1.0])[3], DEGENERATE)

    def test_noisy_band_contains_the_fit(self):
        slope, lo, hi, _ = fit_slope([1.0, 2.0, 4.0, 8.0], [1.0, 0.55, 0.24, 0.13])
        self.assertLess(lo, slope)
        self.assertLess(slope, hi)
        self.assertLess(slope, 0.0)

    def test_csv_files(self):
        table = RateTable()
        for nu in (1e-1, 1e-2, 1e-3):
            table.add_point('nu', 'velocity_gap', nu, nu)
        table.add_point('gamma', 'velocity_gap', 10.0, 1.0)
        table.fit()
        self.assertEqual([p for p, _ in table.points('nu', 'velocity_gap')], [1e-1, 1e-2, 1e-3])
        self.assertTrue(table.get('nu', 'velocity_gap').fitted)
        self.assertEqual(table.get('gamma', 'velocity_gap').flag, TOO_FEW_POINTS)
        with tempfile.TemporaryDirectory() as tmp:
            rates = table.write_rates_csv(Path(tmp) / 'rates.csv').read_text().splitlines()
            series = table.write_series_csv('nu', Path(tmp) / 'nu.csv').read_text().splitlines()
        self.assertEqual(rates[0], 'arm,metric,slope,slope_lo,slope_hi,points,flag')
        self.assertEqual(len(rates), 3)
        self.assertEqual(series[0], 'parameter,metric,value')
        self.assertEqual(series[1], '0.1,velocity_gap,0.1')


class PlottingTests(SimpleTestCase):

    def test_envelope_passes_through_the_anchor(self):
        values = envelope([1e-1, 1e-3], (1e-1, 2.0), 1.0 / 6.0)
        self.assertAlmostEqual(values[0], 2.0)
        self.assertAlmostEqual(values[1], 2.0 * 0.01 ** (1.0 / 6.0))

    def test_svg_is_byte_stable(self):
        series = {'flux_swap_error': [(1e-1, 0.3), (1e-2, 0.2), (1e-3, 0.1)],
                  'velocity_gap': [(1e-1, 0.5), (1e-2, 0.1), (1e-3, 0.0)]}
        reference = ('envelope', 1.0 / 6.0, 'flux_swap_error')
        with tempfile.TemporaryDirectory() as tmp:
            a = emit_svg(series, Path(tmp) / 'a.svg', title='nu arm', reference=reference).read_bytes()
            b = emit_svg(series, Path(tmp) / 'sub' / 'b.svg', title='nu arm', reference=reference).read_bytes()
        self.assertEqual(a, b)
        self.assertIn(b'<svg', a)
        self.assertNotIn(b'<dc:date>', a)

    def test_nothing_positive_still_writes_a_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_svg({'velocity_gap': [(1e-1, 0.0)]}, Path(tmp) / 'empty.svg')
            self.assertTrue(path.exists())


class RegistryTests(SimpleTestCase):

    def test_select_checks(self):
        self.assertEqual(select_checks(CHECK_NAMES), list(CHECK_NAMES))
        self.assertEqual(select_checks(CHECK_NAMES, include=['flux_swap', 'bound_monitor']),
                         ['bound_monitor', 'flux_swap'])
        self.assertEqual(select_checks(['bound_monitor', 'entropy'], exclude=['entropy']), ['bound_monitor'])


class RunAndDiagnoseTests(SimpleTestCase):

    def test_run_writes_the_trajectory_and_bounds(self):
        with tempfile.TemporaryDirectory() as tmp:
            directory, report = cmd_run(small_config(), Path(tmp) / 'run')
            for name in ('manifest.json', 'ledger.csv', 'reports/bound_monitor.csv', 'reports/summary.txt',
                         'snapshots/t_0.npy', 'snapshots/t_2_rho_0.csv', 'steps/rho.npy'):
                self.assertTrue((directory / name).exists(), name)
            self.assertTrue(report.passed, report.summary())

    def test_rerun_is_bit_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            first, _ = cmd_run(small_config(), Path(tmp) / 'a')
            second, _ = cmd_run(small_config(), Path(tmp) / 'b')
            for name in ('ledger.csv', 'manifest.json', 'snapshots/t_1_rho_0.csv', 'snapshots/t_2_potential.csv',
                         'reports/bound_monitor.csv'):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_diagnose_writes_one_file_per_report(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = small_config(out=Path(tmp) / 'run')
            cmd_run(config)
            reports = cmd_diagnose(config, include=['bound_monitor', 'internal_energy', 'flux_swap'])
            self.assertEqual([r.name for r in reports], ['bound_monitor', 'internal_energy', 'flux_swap'])
            reports_dir = Path(tmp) / 'run' / 'reports'
            header = (reports_dir / 'internal_energy.csv').read_text().splitlines()[0]
            self.assertEqual(header, 'term,value,side,nonnegative_min')
            header = (reports_dir / 'flux_swap.csv').read_text().splitlines()[0]
            self.assertEqual(header, 'check,passed,value,bound,detail')
            summary = (reports_dir / 'summary.txt').read_text()
            self.assertIn('internal_energy', summary)

    def test_a_raising_diagnostic_becomes_a_failing_report(self):
        def broken(run, law, data):
            raise CouplingRelationError("pair does not couple", residual=1.0)

        with tempfile.TemporaryDirectory() as tmp:
            config = small_config(out=Path(tmp) / 'run')
            cmd_run(config)
            with mock.patch.dict(CHECKS, {'internal_energy': broken}):
                reports = cmd_diagnose(config, include=['internal_energy'])
        self.assertFalse(reports[0].passed)
        self.assertIn('CouplingRelationError', reports[0].get('completed').detail)

    def test_incompressible_config_runs_the_large_gamma_proxy(self):
        text = SMALL.replace('law: {family: power, gamma: 2, nu: 5.0e-2}',
                             'model: darcy\nlaw: {family: incompressible, nu: 0}')
        with tempfile.TemporaryDirectory() as tmp:
            config = parse_config(text + f"\noutput_dir: {Path(tmp) / 'run'}\n")
            _, report = cmd_run(config)
            reports = cmd_diagnose(config, include=['bound_monitor', 'internal_energy'])
        self.assertTrue(report.passed, report.summary())
        self.assertEqual([r.name for r in reports], ['bound_monitor', 'internal_energy'])


class ConvergenceTests(SimpleTestCase):

    def test_nu_arm(self):
        config = small_config("sweep:\n  nu: [1.0e-1, 1.0e-2, 1.0e-3]\n")
        with tempfile.TemporaryDirectory() as tmp:
            result = cmd_convergence(config, Path(tmp), jobs=2)
            names = sorted(p.name for p in (Path(tmp) / 'convergence').iterdir())
        self.assertEqual(names, ['checks.csv', 'nu.csv', 'nu.svg', 'rates.csv'])
        row = result.table.get(NU_ARM, VELOCITY_GAP)
        self.assertEqual(row.points, 3)
        gaps = [v for _, v in result.table.points(NU_ARM, VELOCITY_GAP)]
        self.assertLess(gaps[-1], gaps[0])
        self.assertIn(f'{NU_ARM}.{FLUX_SWAP}_decreasing', [c.name for c in result.checks.checks])

    def test_two_points_are_not_fitted(self):
        config = small_config("sweep:\n  nu: [1.0e-1, 1.0e-2]\n")
        with tempfile.TemporaryDirectory() as tmp:
            result = cmd_convergence(config, Path(tmp))
        self.assertEqual(result.table.get(NU_ARM, FLUX_SWAP).flag, TOO_FEW_POINTS)
        self.assertNotIn(f'{NU_ARM}.{FLUX_SWAP}_slope_nonpositive', [c.name for c in result.checks.checks])

    def test_joint_and_sequential_paths(self):
        config = small_config("sweep:\n  gamma: [5, 10]\n  joint_nu: [1.0e-1, 5.0e-2]\n")
        with tempfile.TemporaryDirectory() as tmp:
            result = cmd_convergence(config, Path(tmp))
            self.assertTrue((Path(tmp) / 'convergence' / 'diagram.csv').exists())
        self.assertTrue(math.isfinite(result.diagram_gap))
        self.assertGreaterEqual(result.diagram_gap, 0.0)
        self.assertEqual(result.checks.get('diagram_commutes').value, result.diagram_gap)

    def test_empty_sweep_is_a_config_error(self):
        with self.assertRaises(ConfigError):
            arm_members(small_config())

    def test_nu_arm_reports_every_sweep_check(self):
        config = small_config("sweep:\n  nu: [1.0e-1, 1.0e-2, 1.0e-3]\n")
        with tempfile.TemporaryDirectory() as tmp:
            result = cmd_convergence(config, Path(tmp))
        names = [c.name for c in result.checks.checks]
        for name in (f'{NU_ARM}.{FLUX_SWAP}_below_envelope', f'{NU_ARM}.{DERIVATIVE_BUDGET}_uniform',
                     f'{NU_ARM}.{VELOCITY_GAP}_terminal_ratio'):
            self.assertIn(name, names)
        self.assertEqual(result.table.get(NU_ARM, DERIVATIVE_BUDGET).points, 3)


def nu_table(gaps, swaps, budgets, nus=(1e-1, 1e-2, 1e-3, 1e-4)):
    table = RateTable()
    for nu, gap, swap, budget in zip(nus, gaps, swaps, budgets):
        table.add_point(NU_ARM, VELOCITY_GAP, nu, gap)
        table.add_point(NU_ARM, FLUX_SWAP, nu, swap)
        table.add_point(NU_ARM, DERIVATIVE_BUDGET, nu, budget)
    table.fit()
    return nu_sweep_checks(table, CheckReport('convergence'))


class NuSweepCheckTests(SimpleTestCase):

    def test_well_behaved_sweep_passes(self):
        checks = nu_table(gaps=[1.0, 0.5, 0.2, 0.1], swaps=[0.1, 0.05, 0.02, 0.01], budgets=[1.0, 1.2, 1.5, 1.8])
        self.assertTrue(checks.passed, checks.summary())
        self.assertAlmostEqual(checks.get(f'{NU_ARM}.{FLUX_SWAP}_below_envelope').value, 1.0, places=12)
        self.assertAlmostEqual(checks.get(f'{NU_ARM}.{DERIVATIVE_BUDGET}_uniform').value, 1.8, places=12)
        self.assertAlmostEqual(checks.get(f'{NU_ARM}.{VELOCITY_GAP}_terminal_ratio').value, 0.1, places=12)

    def test_flux_swap_above_the_envelope_fails(self):
        # decreasing, but slower than nu^(1/6)
        checks = nu_table(gaps=[1.0, 0.5, 0.2, 0.1], swaps=[0.1, 0.09, 0.08, 0.07], budgets=[1.0] * 4)
        self.assertTrue(checks.get(f'{NU_ARM}.{FLUX_SWAP}_decreasing').passed)
        self.assertFalse(checks.get(f'{NU_ARM}.{FLUX_SWAP}_below_envelope').passed)

    def test_budget_spread_fails(self):
        checks = nu_table(gaps=[1.0, 0.5, 0.2, 0.1], swaps=[0.1, 0.05, 0.02, 0.01], budgets=[1.0, 1.5, 2.0, 2.5])
        check = checks.get(f'{NU_ARM}.{DERIVATIVE_BUDGET}_uniform')
        self.assertFalse(check.passed)
        self.assertAlmostEqual(check.value, 2.5)
        self.assertEqual(check.bound, BUDGET_SPREAD)

    def test_slow_velocity_gap_fails_the_terminal_ratio(self):
        checks = nu_table(gaps=[1.0, 0.5, 0.3, 0.25], swaps=[0.1, 0.05, 0.02, 0.01], budgets=[1.0] * 4)
        self.assertTrue(checks.get(f'{NU_ARM}.{VELOCITY_GAP}_decreasing').passed)
        check = checks.get(f'{NU_ARM}.{VELOCITY_GAP}_terminal_ratio')
        self.assertFalse(check.passed)
        self.assertEqual(check.bound, TERMINAL_RATIO)


class NonConcentrationTests(SimpleTestCase):

    def test_real_run_does_not_concentrate(self):
        config = parse_config(SMALL.replace('cells: 32', 'cells: 128')
                              .replace('{family: power, gamma: 2, nu: 5.0e-2}', '{family: power, gamma: 3, nu: 1.0e-2}')
                              .replace('height: 0.5', 'height: 0.9').replace('horizon: 0.05', 'horizon: 0.1')
                              .replace('observer_times: [0.025]', 'observer_times: [0.05]'))
        law = config.build_law()
        report = non_concentration_report(simulate(config), law, config.build_data())
        self.assertEqual([c.name for c in report.checks],
                         ['ratio_width_0.2', 'ratio_width_0.1', 'ratio_width_0.05', 'ratio_width_0.025'])
        self.assertTrue(report.passed, report.summary())

    def test_gradient_on_the_plateau_level_concentrates(self):
        # the cell where w jumps sits exactly on the plateau level, so its
        # |grad w|^2 stays in every window and the ratio grows like 1/width
        grid = Grid(1, 32, 1.0)
        left = np.arange(32) < 16
        rho = np.where(left, 1.0, 0.5)[None, :]
        potential = np.where(left, 0.5, 1.5)[None, :]
        zeros = np.zeros_like(rho)
        series = StepSeries(grid=grid, times=np.array([0.0]), weights=np.array([1.0]), rho=rho, pressure=zeros,
                            potential=potential, growth=zeros, initial=rho[0], final=rho[0], horizon=1.0,
                            ledger=np.zeros((1, 6)))
        report = non_concentration_report(series, None, None)
        self.assertEqual(report.metadata['level'], 0.5)
        self.assertFalse(report.passed)
        self.assertTrue(report.get('ratio_width_0.1').passed)
        self.assertFalse(report.get('ratio_width_0.025').passed)


class CommandTests(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name) / 'run'
        self.config = write_config(self.tmp.name, SMALL + f"\noutput_dir: {self.out}\n")

    def test_validate_config(self):
        stdout = StringIO()
        call_command('validate_config', '--config', self.config, stdout=stdout)
        self.assertIn('config is valid', stdout.getvalue())

    def test_invalid_config_exits_with_2(self):
        bad = write_config(self.tmp.name, MINIMAL.replace('gamma', 'gamm'))
        with self.assertRaises(CommandError) as ctx:
            call_command('validate_config', '--config', bad, stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            call_command('run', '--config', bad, stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_run_then_diagnose(self):
        call_command('run', '--config', self.config, stdout=StringIO())
        run = ExperimentRun.objects.get(command='run')
        self.assertEqual(run.status, 'PASSED')
        self.assertEqual(list(run.diagnostics.values_list('name', flat=True)), ['bound_monitor'])
        self.assertIsNotNone(run.finished_at)

        call_command('diagnose', '--config', self.config, '--check', 'bound_monitor', stdout=StringIO())
        diagnose = ExperimentRun.objects.get(command='diagnose')
        self.assertEqual(diagnose.status, 'PASSED')
        self.assertEqual(diagnose.config_digest, run.config_digest)

    def test_unknown_check_exits_with_2(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('diagnose', '--config', self.config, '--check', 'entropie', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_trajectory_exits_with_2(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('diagnose', '--config', self.config, '--run', str(Path(self.tmp.name) / 'nowhere'),
                         stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertEqual(ExperimentRun.objects.get().status, 'ERROR')

    def test_convergence_without_sweep_exits_with_2(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('convergence', '--config', self.config, stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)


class RunHistoryTests(TestCase):

    def setUp(self):
        self.run = ExperimentRun.objects.create(scenario='demo', command='diagnose', model='brinkman',
                                                status='RUNNING', config_digest='0' * 64, output_dir='runs/demo')

    def test_failing_report_marks_the_run_failed(self):
        DiagnosticRecord.objects.create(run=self.run, name='internal_energy', passed=False)
        self.run.refresh_from_db()
        self.assertEqual(self.run.status, 'FAILED')
        finish_record(self.run, 'PASSED')
        self.assertEqual(self.run.status, 'FAILED')

    def test_advisory_failure_leaves_the_run_alone(self):
        DiagnosticRecord.objects.create(run=self.run, name='complementarity', passed=False, advisory=True)
        self.run.refresh_from_db()
        self.assertEqual(self.run.status, 'RUNNING')

    def test_read_only_api(self):
        DiagnosticRecord.objects.create(run=self.run, name='bound_monitor', passed=True)
        ExperimentRun.objects.create(scenario='other', command='run', model='darcy', status='PASSED',
                                     config_digest='1' * 64, output_dir='runs/other')
        client = APIClient()

        response = client.get(reverse('experiments:run-list'), {'scenario': 'demo'})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(response.data), 1)
        self.assertEqual(response.data[0]['diagnostics_count'], 1)

        response = client.get(reverse('experiments:run-detail', kwargs={'uuid': self.run.uuid}))
        self.assertEqual(response.data['scenario'], 'demo')

        response = client.get(reverse('experiments:run-diagnostics', kwargs={'uuid': self.run.uuid}))
        self.assertEqual([d['name'] for d in response.data], ['bound_monitor'])

        response = client.post(reverse('experiments:run-list'), {'scenario': 'x'})
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)

    def test_unknown_run_is_404(self):
        url = reverse('experiments:run-diagnostics', kwargs={'uuid': '00000000-0000-0000-0000-000000000000'})
        self.assertEqual(APIClient().get(url).status_code, status.HTTP_404_NOT_FOUND)

    def test_store_reports_keeps_checks(self):
        from .services import store_reports
        report = CheckReport('flux_swap', advisory=True)
        report.add('bound', True, math.inf)
        store_reports(self.run, [report])
        record = self.run.diagnostics.get(name='flux_swap')
        self.assertEqual(record.checks[0]['value'], 'inf')
        self.assertIsNone(record.residual)
