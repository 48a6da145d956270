# experiments/services.py
# the run, diagnose and convergence commands, and their run-history records
import csv
import logging
import math
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from pathlib import Path

from django.utils import timezone

from brinkman_stepper.services import BRINKMAN, run
from brinkman_stepper.storage import load_trajectory, write_trajectory
from core.checks import CheckReport
from core.exceptions import ConfigError, GrowthLabError
from darcy_stepper.services import DARCY, darcy_law, run_darcy
from diagnostics.reports import DissipationReport
from diagnostics.services import (
    bound_monitor, derivative_budget, final_density_gap, flux_swap_error, pressure_gap, velocity_gap,
)
from pressure_laws.laws import POWER
from .models import DiagnosticRecord, ExperimentRun
from .plotting import emit_svg, envelope
from .rates import RateTable
from .registry import CHECKS, select_checks

logger = logging.getLogger(__name__)

REPORT_DIR = 'reports'
CONVERGENCE_DIR = 'convergence'
SUMMARY = 'summary.txt'
CHECK_COLUMNS = ('check', 'passed', 'value', 'bound', 'detail')

NU_ARM = 'nu'
GAMMA_ARM = 'gamma'
JOINT_ARM = 'joint'
ARMS = (NU_ARM, GAMMA_ARM, JOINT_ARM)

VELOCITY_GAP = 'velocity_gap'
FLUX_GAP = 'flux_gap'
FLUX_SWAP = 'flux_swap_error'
PRESSURE_GAP = 'pressure_gap'
DERIVATIVE_BUDGET = 'derivative_budget'

# largest relative L1 distance between the joint and the sequential path
DIAGRAM_TOL = 0.1
FLUX_SWAP_EXPONENT = 1.0 / 6.0
ENVELOPE_SLACK = 1e-12
# largest max/min of the derivative-budget ratio across the nu arm
BUDGET_SPREAD = 2.0
# velocity gap at the smallest nu over the gap at the largest
TERMINAL_RATIO = 0.2


# single runs ---------------------------------------------------------------

def simulate(config, law=None, grid=None, model=None, snapshot_times=None):
    """One trajectory of the configured datum under ``law`` (default: the law the stepper integrates)."""
    law = law or config.stepper_law()
    data = config.build_data(grid)
    model = model or config.model
    controls = config.controls.build()
    times = snapshot_times or config.snapshot_times()
    if model == DARCY:
        return run_darcy(data, law, config.horizon, controls, snapshot_times=times)
    return run(data, law, config.horizon, controls, snapshot_times=times)


def diagnostic_law(config):
    law = config.stepper_law()
    return darcy_law(law) if config.model == DARCY else law


def write_check_csv(report, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=CHECK_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in report.to_rows():
            writer.writerow({**row, 'value': repr(row['value']),
                             'bound': '' if row['bound'] == '' else repr(row['bound'])})
    return path


def write_report(report, directory):
    """reports/<name>.csv: the term ledger for identity reports, the checks otherwise."""
    path = Path(directory) / REPORT_DIR / f'{report.name}.csv'
    if isinstance(report, DissipationReport) and report.terms:
        return report.write_csv(path)
    return write_check_csv(report, path)


def write_summary(reports, directory):
    path = Path(directory) / REPORT_DIR / SUMMARY
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n\n".join(report.summary() for report in reports) + "\n")
    return path


def cmd_run(config, out=None):
    """
    Run the configured model, write the trajectory and the bound monitor.
    Returns (directory, bound report).
    """
    directory = config.output_path(out)
    trajectory = simulate(config)
    write_trajectory(trajectory, directory, scenario=config.scenario, digest=config.digest())
    report = bound_monitor(trajectory, trajectory.law, config.build_data())
    write_report(report, directory)
    write_summary([report], directory)
    logger.info(f"{config.scenario}: run written to {directory} (bounds {'ok' if report.passed else 'violated'})")
    return directory, report


def failed_report(name, exc):
    report = CheckReport(name)
    report.add('completed', False, 0.0, detail=f"{type(exc).__name__}: {exc}")
    return report


def cmd_diagnose(config, directory=None, include=(), exclude=()):
    """
    Evaluate the enabled diagnostics on a stored trajectory. A diagnostic that
    raises becomes a failing report. Returns the reports in registry order.
    """
    directory = Path(directory) if directory else config.output_path()
    stored = load_trajectory(directory)
    law = diagnostic_law(config)
    data = config.build_data(stored.grid)
    names = select_checks(config.diagnostics, include, exclude)
    reports = []
    for name in names:
        try:
            report = CHECKS[name](stored, law, data)
        except GrowthLabError as exc:
            logger.error(f"{config.scenario}: diagnostic {name} failed: {exc}")
            report = failed_report(name, exc)
        report.name = name
        write_report(report, directory)
        reports.append(report)
    write_summary(reports, directory)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        logger.warning(f"{config.scenario}: failing diagnostics {failed}")
    return reports


# convergence sweeps ---------------------------------------------------------------

@dataclass
class ConvergenceResult:
    table: RateTable
    checks: CheckReport
    diagram_gap: float = math.nan
    files: list = field(default_factory=list)


@dataclass(frozen=True)
class Member:
    arm: str
    parameter: float
    gamma: float = None
    nu: float = None
    joint: bool = False


def arm_members(config):
    """Sweep members per arm; an arm with an empty list is skipped."""
    sweep = config.sweep
    if sweep.empty:
        raise ConfigError(["sweep: convergence needs at least one of nu, gamma, joint_nu"])
    if config.law.family != POWER and (sweep.gamma or sweep.joint_nu or sweep.nu):
        raise ConfigError(["law.family: convergence sweeps need a power law"])
    gamma = sweep.gamma_fixed if sweep.gamma_fixed is not None else config.law.gamma
    nu = sweep.nu_fixed if sweep.nu_fixed is not None else config.law.nu
    members = [Member(NU_ARM, v, gamma=gamma, nu=v) for v in sweep.nu]
    members += [Member(GAMMA_ARM, g, gamma=g, nu=nu) for g in sweep.gamma]
    members += [Member(JOINT_ARM, v, nu=v, joint=True) for v in sweep.joint_nu]
    return members


def _member_metrics(config, member, reference):
    law = config.build_law(gamma=member.gamma, nu=member.nu, joint=member.joint)
    trajectory = simulate(config, law, model=BRINKMAN, snapshot_times=config.comparison_times())
    gap = velocity_gap(trajectory, reference)
    metrics = {
        VELOCITY_GAP: gap.gradient_gap,
        FLUX_GAP: gap.flux_gap,
        PRESSURE_GAP: pressure_gap(trajectory, reference),
        FLUX_SWAP: float(flux_swap_error(trajectory, law)),
    }
    if member.arm == NU_ARM:
        metrics[DERIVATIVE_BUDGET] = derivative_budget(trajectory, law).metadata['ratio']
    logger.info(f"{member.arm} arm at {member.parameter:g}: velocity gap {metrics[VELOCITY_GAP]:.4e}")
    # only the joint arm needs its final state later
    return member, metrics, trajectory if member.joint else None


def _strictly_decreasing(pairs):
    """Values strictly decrease as the parameter decreases (pairs sorted by decreasing parameter)."""
    values = [v for _, v in pairs]
    return all(b < a for a, b in zip(values, values[1:]))


def nu_sweep_checks(table, checks):
    """
    Checks on the nu arm of a fitted table: the gaps and the flux-swap error
    shrink with nu, the flux-swap error stays under c nu^(1/6) with c set at
    the largest nu, the derivative budget is uniform in nu, and the velocity
    gap at the smallest nu is a small fraction of the one at the largest.
    """
    for metric in (VELOCITY_GAP, FLUX_SWAP):
        pairs = table.points(NU_ARM, metric)
        checks.add(f'{NU_ARM}.{metric}_decreasing', _strictly_decreasing(pairs),
                   pairs[-1][1], pairs[0][1], detail=f'{len(pairs)} points')
    row = table.get(NU_ARM, FLUX_SWAP)
    if row.fitted:
        checks.add(f'{NU_ARM}.{FLUX_SWAP}_slope_nonpositive', row.slope <= 0, row.slope, 0.0)

    swaps = [(nu, v) for nu, v in table.points(NU_ARM, FLUX_SWAP) if nu > 0]
    if swaps:
        bounds = envelope([nu for nu, _ in swaps], swaps[0], FLUX_SWAP_EXPONENT)
        excess = max((v / b if b > 0 else (1.0 if v == 0 else math.inf)) for (_, v), b in zip(swaps, bounds))
        checks.add(f'{NU_ARM}.{FLUX_SWAP}_below_envelope', excess <= 1.0 + ENVELOPE_SLACK, excess, 1.0,
                   detail=f'anchored at nu={swaps[0][0]:g}')

    budgets = [v for _, v in table.points(NU_ARM, DERIVATIVE_BUDGET)]
    if budgets:
        low, high = min(budgets), max(budgets)
        spread = high / low if low > 0 else (1.0 if high == 0 else math.inf)
        checks.add(f'{NU_ARM}.{DERIVATIVE_BUDGET}_uniform', spread < BUDGET_SPREAD, spread, BUDGET_SPREAD,
                   detail=f'{len(budgets)} points')

    gaps = table.points(NU_ARM, VELOCITY_GAP)
    if len(gaps) >= 2:
        first, last = gaps[0][1], gaps[-1][1]
        ratio = last / first if first > 0 else (0.0 if last == 0 else math.inf)
        checks.add(f'{NU_ARM}.{VELOCITY_GAP}_terminal_ratio', ratio < TERMINAL_RATIO, ratio, TERMINAL_RATIO,
                   detail=f'nu {gaps[-1][0]:g} against {gaps[0][0]:g}')
    return checks


def cmd_convergence(config, out=None, jobs=1):
    """
    Run every sweep arm against its reference, fit log-log slopes and write
    convergence/<arm>.csv, rates.csv and <arm>.svg.

    nu arm: Brinkman at fixed gamma against Darcy on the same grid.
    gamma and joint arms: against the Darcy gamma-proxy on the finest grid.
    Members run in a thread pool; results are keyed by parameter.
    """
    directory = config.output_path(out) / CONVERGENCE_DIR
    members = arm_members(config)
    sweep = config.sweep
    references = {}
    if any(m.arm == NU_ARM for m in members):
        gamma = next(m.gamma for m in members if m.arm == NU_ARM)
        references[NU_ARM] = simulate(config, darcy_law(config.build_law(gamma=gamma)), model=DARCY,
                                      snapshot_times=config.comparison_times())
    if any(m.arm in (GAMMA_ARM, JOINT_ARM) for m in members):
        proxy = darcy_law(config.build_law(gamma=sweep.reference_gamma))
        references[GAMMA_ARM] = references[JOINT_ARM] = simulate(
            config, proxy, grid=config.build_grid(sweep.reference_refinement), model=DARCY,
            snapshot_times=config.comparison_times())

    def work(member):
        return _member_metrics(config, member, references[member.arm])

    with ThreadPool(max(1, int(jobs))) as pool:
        results = pool.map(work, members)

    table = RateTable()
    finals = {}
    for member, metrics, trajectory in results:
        for metric, value in metrics.items():
            table.add_point(member.arm, metric, member.parameter, value)
        finals[(member.arm, member.parameter)] = trajectory
    table.fit()

    checks = CheckReport('convergence')
    result = ConvergenceResult(table, checks)
    if sweep.nu:
        nu_sweep_checks(table, checks)
    if sweep.joint_nu and sweep.gamma:
        # joint path at the smallest nu against the end of the sequential path:
        # gamma -> infinity first, then nu -> 0, i.e. Darcy at the largest gamma
        nu_min = min(sweep.joint_nu)
        joint = finals[(JOINT_ARM, nu_min)]
        sequential = simulate(config, darcy_law(config.build_law(gamma=max(sweep.gamma))), model=DARCY)
        result.diagram_gap = final_density_gap(joint, sequential)
        checks.add('diagram_commutes', result.diagram_gap <= DIAGRAM_TOL, result.diagram_gap, DIAGRAM_TOL)
        path = directory / 'diagram.csv'
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(f"parameter,metric,value\n{nu_min!r},final_density_gap,{result.diagram_gap!r}\n")
        result.files.append(path)

    for arm in ARMS:
        if arm not in table.series:
            continue
        result.files.append(table.write_series_csv(arm, directory / f'{arm}.csv'))
        reference = ('nu^(1/6) envelope', FLUX_SWAP_EXPONENT, FLUX_SWAP) if arm != GAMMA_ARM else None
        result.files.append(emit_svg(table.series[arm], directory / f'{arm}.svg', title=f'{config.scenario}: {arm} arm',
                                     xlabel='gamma' if arm == GAMMA_ARM else 'nu', reference=reference))
    result.files.append(table.write_rates_csv(directory / 'rates.csv'))
    write_check_csv(checks, directory / 'checks.csv')
    logger.info(f"{config.scenario}: convergence over {len(members)} members, checks {'ok' if checks.passed else 'failed'}")
    return result


# run history ---------------------------------------------------------------

def start_record(config, command, directory):
    return ExperimentRun.objects.create(
        scenario=config.scenario,
        command=command,
        model=config.model,
        status='RUNNING',
        config=config.as_dict(),
        config_digest=config.digest(),
        output_dir=str(directory),
    )


def _json_number(value):
    """JSON has no inf or nan; those are stored as their repr."""
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def store_reports(record, reports):
    for report in reports:
        terms = []
        residual = normalized = None
        if isinstance(report, DissipationReport) and report.terms:
            terms = report.term_rows()
            residual, normalized = report.residual, report.normalized_residual
        DiagnosticRecord.objects.create(
            run=record,
            name=report.name,
            passed=report.passed,
            advisory=report.advisory,
            residual=residual if residual is None or math.isfinite(residual) else None,
            normalized_residual=normalized if normalized is None or math.isfinite(normalized) else None,
            terms=terms,
            checks=[{**row, 'value': _json_number(row['value']), 'bound': _json_number(row['bound'])}
                    for row in report.to_rows()],
        )


def finish_record(record, status, message=''):
    record.refresh_from_db(fields=['status'])
    # a failing report may already have marked the run
    if record.status == 'FAILED' and status == 'PASSED':
        status = 'FAILED'
    record.status = status
    record.message = message
    record.finished_at = timezone.now()
    record.save(update_fields=['status', 'message', 'finished_at'])
    return record
