# experiments/registry.py
# named diagnostics the diagnose command can run against a finished trajectory
import logging

from convex_energy.functions import quadratic
from core.checks import CheckReport
from diagnostics.services import (
    ENTROPY, bound_energy_report, bound_monitor, complementarity_residual, derivative_budget,
    derivative_identity_report, flux_swap_error, gradient_control, h1_energy_report, internal_energy_report,
    plateau_level, power_entropy_report, shrinking_intervals, singular_mass_ratio,
)

logger = logging.getLogger(__name__)

# |A| may shrink by this factor before the singular-mass ratio counts as concentrating
CONCENTRATION_FACTOR = 3.0


def non_concentration_report(run, law, data):
    """Singular-mass ratio on shrinking level sets around the plateau potential."""
    level = plateau_level(run)
    report = CheckReport('non_concentration')
    ratios = [singular_mass_ratio(run, A) for A in shrinking_intervals(level)]
    first = ratios[0]
    for A, ratio in zip(shrinking_intervals(level), ratios):
        width = A[0][1] - A[0][0]
        bound = CONCENTRATION_FACTOR * first + 1e-12
        report.add(f'ratio_width_{width:g}', ratio <= bound, ratio, bound)
    report.metadata['level'] = level
    return report


CHECKS = {
    'bound_monitor': lambda run, law, data: bound_monitor(run, law, data),
    'internal_energy': lambda run, law, data: internal_energy_report(run, law),
    'h1_energy': lambda run, law, data: h1_energy_report(run, law),
    'derivative_identity': lambda run, law, data: derivative_identity_report(run, law),
    'power_energy': lambda run, law, data: power_entropy_report(run, law, 2.0),
    'entropy': lambda run, law, data: power_entropy_report(run, law, ENTROPY),
    'bound_energy': lambda run, law, data: bound_energy_report(run, law, data),
    'derivative_budget': lambda run, law, data: derivative_budget(run, law),
    'gradient_control': lambda run, law, data: gradient_control(run, law, quadratic()),
    'complementarity': lambda run, law, data: complementarity_residual(run, law),
    'flux_swap': lambda run, law, data: flux_swap_error(run, law).as_report(),
    'non_concentration': non_concentration_report,
}

CHECK_NAMES = tuple(CHECKS)
DEFAULT_CHECKS = CHECK_NAMES


def select_checks(enabled, include=(), exclude=()):
    """
    The checks to run: ``include`` (when given) replaces ``enabled``, then
    ``exclude`` is removed. Order follows the registry.
    """
    wanted = set(include) if include else set(enabled)
    wanted -= set(exclude)
    return [name for name in CHECK_NAMES if name in wanted]
