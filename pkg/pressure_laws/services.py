# pressure_laws/services.py
# validators for the growth/energy assumptions and for well-prepared data
import logging
import math

import numpy as np

from core.checks import CheckReport

logger = logging.getLogger(__name__)

# sample points for the limits of f(a)/a
SMALL_DENSITY = 1e-6
LARGE_DENSITY_FACTOR = 1e6
# f(a)/a must be below this at SMALL_DENSITY and above its inverse at the large sample
SLOPE_RATIO_LIMIT = 1e-3


def check_assumptions(law):
    """Growth and energy assumptions, checked at sample points."""
    report = CheckReport(name=f'assumptions[{law.name}]')
    growths = law.species_growth or (law.growth,)
    for i, G in enumerate(growths):
        tag = f'species_{i}.' if law.species_growth else ''
        g0 = float(G(0.0))
        report.add(f'{tag}growth_positive_at_zero', g0 > 0, g0, 0.0)
        at_h = float(G(G.p_H))
        report.add(f'{tag}growth_vanishes_at_p_H', abs(at_h) <= 1e-12 * max(1.0, abs(g0)), abs(at_h), 0.0)
        p = np.linspace(0.0, 2.0 * max(G.p_H, 1.0), 257)
        steps = np.diff(G(p))
        report.add(f'{tag}growth_decreasing', np.all(steps <= 0) and np.any(steps < 0),
                   float(np.max(steps)), 0.0)

    f = law.energy
    below = f.value_at(-SMALL_DENSITY)
    report.add('energy_infinite_below_zero', below == math.inf, below)
    small = f.value_at(SMALL_DENSITY) / SMALL_DENSITY
    report.add('energy_sublinear_at_zero', math.isfinite(small) and abs(small) <= SLOPE_RATIO_LIMIT,
               small, SLOPE_RATIO_LIMIT)
    big_a = LARGE_DENSITY_FACTOR * law.a0
    big = f.value_at(big_a) / big_a
    report.add('energy_superlinear_at_infinity', big >= 1.0 / SLOPE_RATIO_LIMIT, big, 1.0 / SLOPE_RATIO_LIMIT)
    ends = f.value_at(np.array([0.0, law.a0]))
    report.add('domain_contains_0_a0', bool(np.all(np.isfinite(ends))), law.a0,
               detail=f'f(0)={ends[0]:.3g}, f(a0)={ends[1]:.3g}')
    if not report.passed:
        logger.warning(f"{law.name} fails {[c.name for c in report.failures]}")
    return report


def validate_well_prepared(data, law):
    """
    Definition check on the initial datum: total density below sup df*(B),
    finite mass and finite sup norm. Failures are report entries.
    """
    report = CheckReport(name='well_prepared')
    total = data.total()
    cap = law.density_cap(data.bound_B)
    peak = total.max()
    mass = total.integral()
    report.add('density_below_cap', peak <= cap * (1.0 + 1e-12) + 1e-300, peak, cap,
               detail=f'B={data.bound_B:g}')
    report.add('mass_finite', math.isfinite(mass) and mass >= 0, mass)
    report.add('linf_finite', math.isfinite(peak), peak)
    if law.species_growth:
        report.add('species_match_growth_terms', len(law.species_growth) == data.species,
                   data.species, len(law.species_growth))
    report.metadata.update({
        'M0': mass,
        'linf': peak,
        'cap_at_B': cap,
        'B_p': law.pressure_bound,
    })
    if not report.passed:
        logger.warning(f"initial datum is not well prepared for {law.name}: {report.failures}")
    return report
