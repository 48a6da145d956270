# diagnostics/services.py
# energy identities, a-priori bounds and convergence quantities evaluated on finished runs
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import xlogy

from brinkman_stepper.state import Trajectory
from brinkman_stepper.storage import StoredRun
from convex_energy.functions import ClosedFormFunction, quadratic, tabulate
from convex_energy.services import DEFAULT_A_MAX, check_coupling, density_window, e_from_z, h_energy
from core.checks import CheckReport
from core.conf import growthlab_setting
from core.exceptions import CouplingRelationError, InvalidParameter
from core.numerics import cumulative_integral, uniform_nodes
from darcy_stepper.services import HELE_SHAW_GAMMA
from field_grid.grids import ScalarField
from field_grid.operators import cell_gradient_sq, cell_inner, face_inner, gradient, laplacian, restrict
from pressure_laws.laws import POWER
from .reports import INFO, RHS, DissipationReport
from .test_functions import default_test_function, total_energy_weight

logger = logging.getLogger(__name__)

ENTROPY = 'entropy'
# fewest common snapshots a time-integrated gap is trusted with
MIN_GAP_TIMES = 3


# step series ---------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    t: float
    weight: float
    rho: np.ndarray
    pressure: np.ndarray
    potential: np.ndarray
    growth: np.ndarray


@dataclass(frozen=True, eq=False)
class StepSeries:
    """Recorded step states of a run, in memory or read back from disk."""
    grid: object
    times: np.ndarray
    weights: np.ndarray
    rho: np.ndarray
    pressure: np.ndarray
    potential: np.ndarray
    growth: np.ndarray
    initial: np.ndarray
    final: np.ndarray
    horizon: float
    ledger: np.ndarray

    def __len__(self):
        return len(self.times)

    def records(self):
        for k in range(len(self.times)):
            yield Record(float(self.times[k]), float(self.weights[k]), self.rho[k],
                         self.pressure[k], self.potential[k], self.growth[k])

    def density_max(self):
        peaks = [float(np.max(self.initial)), float(np.max(self.final))]
        if len(self):
            peaks.append(float(np.max(self.rho)))
        return max(peaks)

    def pressure_max(self):
        if not len(self):
            return 0.0
        return float(max(np.max(self.pressure), np.max(self.potential)))


def step_series(run):
    if isinstance(run, StepSeries):
        return run
    if isinstance(run, Trajectory):
        arrays = run.steps.arrays()
        first = run.initial if run.initial is not None else run.snapshots[0]
        return StepSeries(
            grid=run.grid,
            times=arrays['times'],
            weights=arrays['dts'],
            rho=arrays['rho'],
            pressure=arrays['pressure'],
            potential=arrays['potential'],
            growth=arrays['growth'],
            initial=np.array(first.total().values),
            final=np.array(run.final.total().values),
            horizon=run.final.t,
            ledger=np.asarray(run.ledger, dtype=float).reshape(len(run.ledger), -1),
        )
    if isinstance(run, StoredRun):
        if not run.times or run.times[0] != 0.0:
            raise InvalidParameter("a stored run needs its first snapshot at t = 0 for the diagnostics")
        species = int(run.manifest['species'])
        steps = run.steps
        return StepSeries(
            grid=run.grid,
            times=steps['times'],
            weights=steps['dts'],
            rho=steps['rho'],
            pressure=steps['pressure'],
            potential=steps['potential'],
            growth=steps['growth'],
            initial=np.sum(run.snapshots[0][:species], axis=0),
            final=np.sum(run.snapshots[-1][:species], axis=0),
            horizon=float(run.times[-1]),
            ledger=np.asarray(run.ledger, dtype=float),
        )
    raise InvalidParameter(f"cannot read step records from {type(run).__name__}")


def _space_time(series, integrand):
    """sum_k weight_k * h^d * sum(integrand(record_k))."""
    volume = series.grid.cell_volume
    return math.fsum(r.weight * float(np.sum(integrand(r))) * volume for r in series.records())


# energy pairs ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnergyPair:
    """A density energy e and its pressure function z, tied by a c - e(a) = z'(b)."""
    name: str
    e: object
    z: object
    # (rho, p) -> e(rho) + z'(p), simplified where the pair allows it
    growth_factor: Optional[Callable] = None

    def factor(self, rho, p):
        if self.growth_factor is not None:
            return self.growth_factor(rho, p)
        return self.e.value_at(rho) + self.z.derivative_at(p)


def pressure_function(name, z_prime, z_second, b_max):
    """z with closed-form z' and z''; z itself is the running integral of z' tabulated on [0, b_max]."""
    b = uniform_nodes(0.0, b_max)
    slopes = np.asarray(z_prime(b), dtype=float)
    table = tabulate(f"{name}:values", b, cumulative_integral(b, slopes, z_second(b)), slopes)
    return ClosedFormFunction(name=name, value=table.value_at, slope=z_prime, curvature=z_second)


def _pressure_window(series, law):
    return 1.25 * max(law.pressure_bound, series.pressure_max(), 1.0)


def _density_limit(law, rho_max):
    """Upper end of density tables: the law's own window for bounded domains."""
    f = law.energy
    if math.isfinite(f.domain_hi):
        return None
    return max(DEFAULT_A_MAX, 1.5 * rho_max)


def internal_pair(law, b_max):
    f_star = law.conjugate
    z = pressure_function(f"z[{f_star.name}]", f_star.value_at, f_star.derivative_at, b_max)
    return EnergyPair('internal_energy', law.energy, z, growth_factor=lambda rho, p: rho * p)


def h1_pair(law, b_max, rho_max=0.0):
    f_star = law.conjugate
    a_max = _density_limit(law, rho_max)
    h = h_energy(law.energy, window=None if a_max is None else (0.0, a_max))

    def z_prime(b):
        a = f_star.derivative_at(b)
        return a * f_star.value_at(b) - h.value_at(a)

    def z_second(b):
        return f_star.derivative_at(b) ** 2

    z = pressure_function(f"z[h*({f_star.name})]", z_prime, z_second, b_max)
    return EnergyPair('h1_energy', h, z, growth_factor=lambda rho, p: rho * f_star.value_at(p))


def derivative_pair(law, rho_max=0.0):
    """z'(b) = b; e built from z with a1 = a0 / 2."""
    a_max = _density_limit(law, rho_max)
    z = quadratic()
    e = e_from_z(z, law.energy, 0.5 * law.a0, window=None if a_max is None else (0.0, a_max))
    return EnergyPair('derivative_identity', e, z)


def power_energy_function(m):
    m = float(m)

    def curvature(a):
        with np.errstate(divide='ignore'):
            return np.where(a > 0, m * np.power(a, m - 2.0), 0.0 if m >= 2 else math.inf)

    return ClosedFormFunction(
        name=f'power_energy(m={m:g})',
        value=lambda a: (np.power(a, m) - a) / (m - 1.0),
        domain_lo=0.0,
        lo_closed=True,
        slope=lambda a: (m * np.power(a, m - 1.0) - 1.0) / (m - 1.0),
        curvature=curvature,
    )


def entropy_function():
    def slope(a):
        with np.errstate(divide='ignore'):
            return np.log(a)

    def curvature(a):
        with np.errstate(divide='ignore'):
            return 1.0 / a

    return ClosedFormFunction(
        name='entropy',
        value=lambda a: xlogy(a, a) - a,
        domain_lo=0.0,
        lo_closed=True,
        slope=slope,
        curvature=curvature,
    )


def power_pair(law, m, b_max):
    f_star = law.conjugate
    if m == ENTROPY:
        z = pressure_function(f"z[{f_star.name}']", f_star.derivative_at, f_star.curvature_at, b_max)
        return EnergyPair('entropy', entropy_function(), z, growth_factor=lambda rho, p: xlogy(rho, rho))
    m = float(m)
    if not m > 1:
        raise InvalidParameter(f"power dissipation needs m > 1 or '{ENTROPY}', got {m}")

    def z_prime(b):
        return np.power(f_star.derivative_at(b), m)

    def z_second(b):
        return m * np.power(f_star.derivative_at(b), m - 1.0) * f_star.curvature_at(b)

    e = power_energy_function(m)
    z = pressure_function(f"z[{f_star.name}'^{m:g}]", z_prime, z_second, b_max)
    return EnergyPair(f'power_m{m:g}', e, z,
                      growth_factor=lambda rho, p: np.power(rho, m) + e.value_at(rho))


def bound_energy_pair(law, B_p, rho_max=0.0):
    """
    z'(b) = (b - B_p)_+ and the e built from it with a1 below the density
    cap, so that e vanishes on [0, sup df*(B_p)].
    """
    B_p = float(B_p)
    z = ClosedFormFunction(
        name=f'excess(B_p={B_p:g})',
        value=lambda b: 0.5 * np.maximum(b - B_p, 0.0) ** 2,
        slope=lambda b: np.maximum(b - B_p, 0.0),
        curvature=lambda b: np.where(b > B_p, 1.0, 0.0),
    )
    cap = law.density_cap(B_p)
    a1 = 0.5 * cap if cap > 0 else 0.5 * law.a0
    a_max = _density_limit(law, rho_max)
    e = e_from_z(z, law.energy, a1, window=None if a_max is None else (0.0, a_max))
    return EnergyPair('bound_energy', e, z)


# the weak energy identity -------------------------------------------------------

def _coupling_samples(law, series):
    _, hi = density_window(law.energy)
    top = max(series.density_max(), law.density_cap())
    top = min(1.05 * top, hi) if top > 0 else hi
    return np.linspace(0.0, top, 258)[1:-1]


def _scaled_min(cells):
    if cells.size == 0:
        return 0.0
    return float(np.min(cells)) / max(1.0, float(np.max(np.abs(cells))))


def eee_residual(run, law, e, z, psi, name='eee', growth_factor=None):
    """
    Every term of the weak energy identity for the pair (e, z) against psi:

        int psi(T) e(rho_T) - int int e d_t psi + int int e grad w . grad psi
          - int int z(w) Lap psi + int int psi L_z(w, p)
        = int int psi (e(rho) + z'(p)) G + int psi(0) e(rho_0)

    with L_z = z''(w) |grad w|^2 + (z'(w) - z'(p)) (w - p) / nu. Time
    integrals use the recorded steps with left-endpoint weights.
    """
    series = step_series(run)
    pair = EnergyPair(name, e, z, growth_factor)
    coupling = check_coupling(e, z, law.energy, samples=_coupling_samples(law, series))
    if not coupling.passed():
        logger.error(f"{name}: coupling relation fails at a={coupling.worst_a:.6g} "
                     f"(residual {coupling.residual:.3g})")
        raise CouplingRelationError(f"{e.name} and {z.name} do not satisfy the coupling relation "
                                    f"(residual {coupling.residual:.3g} at a={coupling.worst_a:.6g})",
                                    residual=coupling.residual)
    grid = series.grid
    volume = grid.cell_volume
    nu = law.nu
    sums = {key: [] for key in ('time', 'transport', 'laplacian', 'gradient', 'friction', 'growth')}
    mins = {'gradient': 0.0, 'friction': 0.0}
    for r in series.records():
        weighted = r.weight * volume
        psi_k = psi.values(grid, r.t)
        e_rho = e.value_at(r.rho)
        grad_w = gradient(ScalarField(grid, r.potential))
        gradient_cells = z.curvature_at(r.potential) * cell_gradient_sq(grad_w)
        if nu > 0:
            friction_cells = (z.derivative_at(r.potential) - z.derivative_at(r.pressure)) \
                * (r.potential - r.pressure) / nu
        else:
            friction_cells = np.zeros(grid.shape)
        mins['gradient'] = min(mins['gradient'], _scaled_min(gradient_cells))
        mins['friction'] = min(mins['friction'], _scaled_min(friction_cells))
        sums['gradient'].append(weighted * float(np.sum(psi_k * gradient_cells)))
        sums['friction'].append(weighted * float(np.sum(psi_k * friction_cells)))
        sums['time'].append(-weighted * float(np.sum(e_rho * psi.time_derivative(grid, r.t))))
        sums['growth'].append(weighted * float(np.sum(psi_k * pair.factor(r.rho, r.pressure) * r.growth)))
        if not psi.spatially_constant:
            psi_field = ScalarField(grid, psi_k)
            sums['transport'].append(weighted * float(np.sum(e_rho * cell_inner(grad_w, gradient(psi_field)))))
            sums['laplacian'].append(-weighted * float(np.sum(z.value_at(r.potential)
                                                              * laplacian(psi_field).values)))

    T = series.horizon
    report = DissipationReport(name=name)
    report.add_term('final_energy', float(np.sum(psi.values(grid, T) * e.value_at(series.final))) * volume)
    report.add_term('time_derivative', math.fsum(sums['time']))
    report.add_term('transport', math.fsum(sums['transport']))
    report.add_term('pressure_laplacian', math.fsum(sums['laplacian']))
    report.add_term('dissipation_gradient', math.fsum(sums['gradient']), nonnegative_min=mins['gradient'])
    report.add_term('dissipation_friction', math.fsum(sums['friction']), nonnegative_min=mins['friction'])
    report.add_term('growth', math.fsum(sums['growth']), side=RHS)
    report.add_term('initial_energy', float(np.sum(psi.values(grid, 0.0) * e.value_at(series.initial))) * volume,
                    side=RHS)

    floor = growthlab_setting('NONNEGATIVITY_FLOOR')
    tol = growthlab_setting('RESIDUAL_TOL')
    report.add('terms_finite', all(math.isfinite(t.value) for t in report.terms), len(report.terms))
    report.add('dissipation_gradient_nonnegative', mins['gradient'] >= -floor, mins['gradient'], -floor)
    report.add('dissipation_friction_nonnegative', mins['friction'] >= -floor, mins['friction'], -floor)
    report.add('residual', report.normalized_residual <= tol, report.normalized_residual, tol)
    report.metadata.update({
        'pair': pair.name,
        'e': e.name,
        'z': z.name,
        'nu': nu,
        'cells': grid.cells,
        'dim': grid.dim,
        'records': len(series),
        'dt_max': float(np.max(series.weights)) if len(series) else 0.0,
        'horizon': T,
        'coupling_residual': coupling.residual,
        'n_psi': psi.n_psi(grid, series.times, series.weights),
    })
    logger.debug(f"{name}: residual {report.residual:.3e} over {len(series)} records")
    if not report.passed:
        logger.warning(f"{name} fails {[c.name for c in report.failures]}")
    return report


def report_for_pair(run, law, pair, psi):
    return eee_residual(run, law, pair.e, pair.z, psi, name=pair.name, growth_factor=pair.growth_factor)


def internal_energy_report(run, law, eta=None):
    series = step_series(run)
    pair = internal_pair(law, _pressure_window(series, law))
    return report_for_pair(series, law, pair, total_energy_weight(eta))


def h1_energy_report(run, law, eta=None):
    """The H^-1 identity plus the kinetic term int int eta |grad f*(w)|^2, reported apart."""
    series = step_series(run)
    pair = h1_pair(law, _pressure_window(series, law), series.density_max())
    psi = total_energy_weight(eta)
    report = report_for_pair(series, law, pair, psi)
    f_star = law.conjugate
    grid = series.grid
    kinetic = _space_time(series, lambda r: psi.values(grid, r.t) * cell_gradient_sq(
        gradient(ScalarField(grid, f_star.value_at(r.potential)))))
    report.add_term('kinetic', kinetic, side=INFO)
    return report


def derivative_identity_report(run, law, eta=None):
    """z'(b) = b: the equality behind the derivative budget."""
    series = step_series(run)
    return report_for_pair(series, law, derivative_pair(law, series.density_max()), total_energy_weight(eta))


def power_entropy_report(run, law, m=2.0, eta=None):
    series = step_series(run)
    pair = power_pair(law, m, _pressure_window(series, law))
    report = report_for_pair(series, law, pair, total_energy_weight(eta))
    if m == ENTROPY:
        grid = series.grid
        moment = float(np.sum(grid.radius(grid.origin + 0.5 * grid.length) ** 2 * series.initial)) \
            * grid.cell_volume
        report.add('second_moment_finite', math.isfinite(moment), moment)
    return report


def bound_energy_report(run, law, data, tol=1e-8):
    """Every term of the identity for the excess pair vanishes while p <= B_p and rho <= sup df*(B_p)."""
    series = step_series(run)
    B_p = max(law.pressure_bound, data.bound_B)
    pair = bound_energy_pair(law, B_p, series.density_max())
    report = report_for_pair(series, law, pair, total_energy_weight())
    largest = max(abs(t.value) for t in report.terms)
    scale = max(1.0, data.mass())
    report.add('terms_vanish', largest <= tol * scale, largest, tol * scale)
    report.metadata['B_p'] = B_p
    return report


def friction_identity_gap(run, law, z, nodes=8):
    """
    Worst relative gap, over cells where w and p differ, between the friction
    term (z'(w) - z'(p)) (w - p) / nu and its expansion
    nu |Lap_h w|^2 int_0^1 z''(p + s (w - p)) ds (Gauss-Legendre in s).
    """
    if not law.nu > 0:
        raise InvalidParameter("the friction identity needs nu > 0")
    series = step_series(run)
    grid = series.grid
    nu = law.nu
    s, weights = np.polynomial.legendre.leggauss(nodes)
    s, weights = 0.5 * (s + 1.0), 0.5 * weights
    worst = 0.0
    for r in series.records():
        jump = r.potential - r.pressure
        largest = float(np.max(np.abs(jump)))
        if largest == 0:
            continue
        keep = np.abs(jump) > 1e-4 * largest
        w, p = r.potential[keep], r.pressure[keep]
        friction = (z.derivative_at(w) - z.derivative_at(p)) * (w - p) / nu
        mean_curvature = sum(wk * z.curvature_at(p + sk * (w - p)) for sk, wk in zip(s, weights))
        lap_w = laplacian(ScalarField(grid, r.potential)).values[keep]
        expansion = nu * lap_w ** 2 * mean_curvature
        scale = np.maximum(np.abs(friction), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(friction - expansion) / scale)))
    return worst


# bounds and budgets ------------------------------------------------------------

def _test_function(series, psi):
    if psi is not None:
        return psi
    return default_test_function(ScalarField(series.grid, series.initial), series.horizon)


def derivative_budget(run, law, psi=None, constant=None):
    """
    int int psi (|grad w|^2 + nu |Lap w|^2) against C N(psi) (||rho + p + rho^2 p^2||_inf + 1).
    The ratio of the two is recorded; C only decides pass/fail.
    """
    series = step_series(run)
    psi = _test_function(series, psi)
    constant = growthlab_setting('BUDGET_CONSTANT') if constant is None else float(constant)
    grid = series.grid
    nu = law.nu
    gradient_part = _space_time(series, lambda r: psi.values(grid, r.t) * cell_gradient_sq(
        gradient(ScalarField(grid, r.potential))))
    laplacian_part = _space_time(series, lambda r: nu * psi.values(grid, r.t)
                                 * laplacian(ScalarField(grid, r.potential)).values ** 2)
    sup = 0.0
    for r in series.records():
        sup = max(sup, float(np.max(r.rho + r.pressure + r.rho ** 2 * r.pressure ** 2)))
    n_psi = psi.n_psi(grid, series.times, series.weights)
    bound = constant * n_psi * (sup + 1.0)
    report = DissipationReport(name='derivative_budget')
    report.add_term('gradient', gradient_part)
    report.add_term('viscous_laplacian', laplacian_part)
    report.add_term('bound', bound, side=INFO)
    lhs = gradient_part + laplacian_part
    report.add('within_budget', lhs <= bound, lhs, bound)
    report.metadata.update({'n_psi': n_psi, 'sup_norm': sup, 'constant': constant, 'nu': nu,
                            'ratio': lhs / (n_psi * (sup + 1.0)) if n_psi > 0 else 0.0})
    return report


def gradient_control(run, law, z, psi=None):
    """int int psi z''(w) |grad w|^2 against N(psi) sup_[0, B_p] |z'|; advisory, the ratio is the output."""
    series = step_series(run)
    psi = _test_function(series, psi)
    grid = series.grid
    lhs = _space_time(series, lambda r: psi.values(grid, r.t) * z.curvature_at(r.potential)
                      * cell_gradient_sq(gradient(ScalarField(grid, r.potential))))
    b = np.linspace(0.0, law.pressure_bound, 257)
    sup = float(np.max(np.abs(z.derivative_at(b))))
    n_psi = psi.n_psi(grid, series.times, series.weights)
    scale = n_psi * sup
    report = CheckReport('gradient_control', advisory=True)
    report.add('ratio', True, lhs / scale if scale > 0 else 0.0, detail=f'lhs={lhs:.6g}, N(psi)={n_psi:.6g}')
    report.metadata.update({'lhs': lhs, 'n_psi': n_psi, 'sup_z_prime': sup})
    return report


def complementarity_residual(run, law, V_p=0.0, margin=None):
    """
    Lap_h w + G(p) on {p > V_p + margin} in L1 and Linf, and the violation of
    -Lap_h w <= sgn_+(p - V_p) G(p) on {w > V_p}. Advisory when the run
    exceeds the density level the statement needs.
    """
    series = step_series(run)
    grid = series.grid
    volume = grid.cell_volume
    V_p = float(V_p)
    margin = 0.05 * law.p_H if margin is None else float(margin)
    proxy = law.family == POWER and law.gamma >= HELE_SHAW_GAMMA
    cap = 1.0 if proxy else law.density_cap(V_p)
    peak = series.density_max()
    advisory = peak > cap * (1.0 + 1e-2)
    l1, linf, measure, violation, reference = [], 0.0, [], [], []
    for r in series.records():
        lap_w = laplacian(ScalarField(grid, r.potential)).values
        saturated = r.pressure > V_p + margin
        residual = np.abs(lap_w + r.growth)[saturated]
        l1.append(r.weight * float(np.sum(residual)) * volume)
        measure.append(r.weight * float(np.count_nonzero(saturated)) * volume)
        if residual.size:
            linf = max(linf, float(np.max(residual)))
        positive = r.potential > V_p
        excess = np.maximum(-lap_w - np.where(r.pressure > V_p, r.growth, 0.0), 0.0)[positive]
        violation.append(r.weight * float(np.sum(excess)) * volume)
        reference.append(r.weight * float(np.sum(np.abs(lap_w[positive]))) * volume)
    l1, violation, reference = math.fsum(l1), math.fsum(violation), math.fsum(reference)
    report = CheckReport('complementarity', advisory=advisory)
    report.add('density_below_level', not advisory, peak, cap)
    report.add('residual_l1', True, l1)
    report.add('residual_linf', True, linf)
    report.add('inequality_l1', violation <= 0.1 * reference + 1e-12, violation, 0.1 * reference + 1e-12)
    report.metadata.update({'V_p': V_p, 'margin': margin, 'saturated_measure': math.fsum(measure),
                            'empty': math.fsum(measure) == 0.0})
    if advisory:
        logger.warning(f"complementarity: density {peak:.4g} above {cap:.4g}; report is advisory")
    return report


def _growth_at_zero(law):
    growths = law.species_growth or (law.growth,)
    return max(float(g(0.0)) for g in growths)


def bound_monitor(run, law, data, pressure_margin=1e-2, mass_margin=1e-3):
    """Pressure below B_p, mass below e^{G(0) t} M(0), density below sup df*(B_p), over the ledger."""
    series = step_series(run)
    ledger = series.ledger
    t, mass, max_p, max_rho = ledger[:, 1], ledger[:, 3], ledger[:, 5], ledger[:, 6]
    B_p = max(law.pressure_bound, data.bound_B)
    g0 = _growth_at_zero(law)
    m0 = data.mass()
    cap_B = law.density_cap(data.bound_B)
    cap = law.density_cap(B_p)
    report = CheckReport('bound_monitor')
    rho_in = data.total().max()
    report.add('initial_density_below_cap', rho_in <= cap_B * (1.0 + 1e-12), rho_in, cap_B,
               detail=f'B={data.bound_B:g}')
    peak_p = float(np.max(max_p))
    report.add('pressure_bound', peak_p <= B_p * (1.0 + pressure_margin), peak_p, B_p * (1.0 + pressure_margin))
    envelope = np.exp(g0 * t) * m0
    if m0 > 0:
        worst = float(np.max(mass / envelope))
        report.add('mass_bound', worst <= 1.0 + mass_margin, worst, 1.0 + mass_margin)
    else:
        worst = float(np.max(np.abs(mass)))
        report.add('mass_bound', worst == 0.0, worst, 0.0)
    peak_rho = float(np.max(max_rho))
    report.add('density_bound', peak_rho <= cap * (1.0 + pressure_margin), peak_rho, cap * (1.0 + pressure_margin))
    report.metadata.update({'B_p': B_p, 'G0': g0, 'M0': m0, 'density_cap': cap})
    if not report.passed:
        logger.warning(f"bound monitor fails {[c.name for c in report.failures]}")
    return report


# non-concentration ---------------------------------------------------------------

def normalize_intervals(A):
    """Sorted, merged closed intervals."""
    pairs = sorted((float(lo), float(hi)) for lo, hi in A)
    merged = []
    for lo, hi in pairs:
        if hi < lo:
            raise InvalidParameter(f"interval [{lo}, {hi}] is reversed")
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def interval_measure(A):
    return math.fsum(hi - lo for lo, hi in normalize_intervals(A))


def _indicator(values, intervals):
    mask = np.zeros(values.shape, dtype=bool)
    for lo, hi in intervals:
        mask |= (values >= lo) & (values <= hi)
    return mask


def singular_mass(run, A):
    """int int chi_A(w) |grad w|^2 over the whole box."""
    series = step_series(run)
    intervals = normalize_intervals(A)
    grid = series.grid
    return _space_time(series, lambda r: np.where(
        _indicator(r.potential, intervals), cell_gradient_sq(gradient(ScalarField(grid, r.potential))), 0.0))


def singular_mass_ratio(run, A):
    measure = interval_measure(A)
    if measure <= 0:
        raise InvalidParameter("the ratio needs a set of positive measure")
    return singular_mass(run, A) / measure


def shrinking_intervals(center, widths=(0.2, 0.1, 0.05, 0.025)):
    return [[(center - 0.5 * w, center + 0.5 * w)] for w in widths]


def plateau_level(run):
    """Median potential over the cells within 10% of the final peak density."""
    series = step_series(run)
    if not len(series):
        return 0.0
    rho, w = series.rho[-1], series.potential[-1]
    peak = float(np.max(rho))
    if peak <= 0:
        return 0.0
    return float(np.median(w[rho >= 0.9 * peak]))


# flux swap ------------------------------------------------------------------

@dataclass(frozen=True)
class FluxSwap:
    error: float
    i1: float
    i2: float
    delta: float
    s_measure: float
    bound: float
    n_psi: float

    def __float__(self):
        return self.error

    def as_report(self):
        report = CheckReport('flux_swap', advisory=True)
        for name in ('error', 'i1', 'i2', 'delta', 's_measure', 'bound', 'n_psi'):
            report.add(name, True, getattr(self, name))
        return report


def steep_set(f_star, b_max, delta, points=513):
    """
    Nodes of [0, b_max] where the maximal function sup_beta |f*'(b) - f*'(beta)| / |b - beta|
    exceeds 1/delta. Returns (mask, node spacing).
    """
    if b_max <= 0 or delta <= 0:
        return np.zeros(points, dtype=bool), max(b_max, 1.0) / (points - 1)
    b = np.linspace(0.0, b_max, points)
    slopes = f_star.derivative_at(b)
    gap = np.abs(b[:, None] - b[None, :])
    np.fill_diagonal(gap, np.inf)
    quotient = np.abs(slopes[:, None] - slopes[None, :]) / gap
    return np.max(quotient, axis=1) > 1.0 / delta, b_max / (points - 1)


def flux_swap_error(run, law, psi=None, delta=None):
    """
    int int psi |rho - f*'(w)| |grad w| and the two pieces that control it:
    I1 = int int psi |p - w| |grad w| and I2 = int int psi chi_S(w) |grad w|^2,
    S the steep set at level 1/delta (default delta = nu^(1/3)).
    """
    series = step_series(run)
    psi = _test_function(series, psi)
    grid = series.grid
    f_star = law.conjugate
    delta = law.nu ** (1.0 / 3.0) if delta is None else float(delta)
    b_max = max(law.pressure_bound, series.pressure_max())
    mask, db = steep_set(f_star, b_max, delta)

    def magnitude(r):
        return np.sqrt(cell_gradient_sq(gradient(ScalarField(grid, r.potential))))

    def in_steep(w):
        idx = np.clip(np.rint(w / db).astype(int), 0, mask.size - 1)
        return mask[idx] & (w >= 0) & (w <= b_max)

    error = _space_time(series, lambda r: psi.values(grid, r.t) * np.abs(
        r.rho - f_star.derivative_at(r.potential)) * magnitude(r))
    i1 = _space_time(series, lambda r: psi.values(grid, r.t) * np.abs(r.pressure - r.potential) * magnitude(r))
    i2 = _space_time(series, lambda r: psi.values(grid, r.t) * np.where(in_steep(r.potential),
                                                                       magnitude(r) ** 2, 0.0))
    psi_l1 = _space_time(series, lambda r: psi.values(grid, r.t))
    rho_inf = series.density_max()
    if delta > 0:
        first = i1 / delta
    else:
        first = 0.0 if i1 == 0 else math.inf
    bound = first + math.sqrt(i2 * psi_l1 * rho_inf)
    result = FluxSwap(error, i1, i2, delta, float(np.count_nonzero(mask)) * db, bound,
                      psi.n_psi(grid, series.times, series.weights))
    logger.debug(f"flux swap at nu={law.nu:g}: error {error:.3e}, I1 {i1:.3e}, I2 {i2:.3e}")
    return result


# cross-run gaps ---------------------------------------------------------------

@dataclass(frozen=True)
class VelocityGap:
    gradient_gap: float
    flux_gap: float
    times: tuple = field(default=())

    def __float__(self):
        return self.gradient_gap


def _common_grid(a, b):
    return a if a.cells <= b.cells else b


def _common_times(run, reference, t0):
    ref_times = reference.snapshot_times()
    pairs = []
    for state in run.snapshots:
        if state.t < t0:
            continue
        match = [s for s in reference.snapshots if math.isclose(s.t, state.t, rel_tol=1e-12, abs_tol=1e-15)]
        if match:
            pairs.append((state, match[0]))
    if not pairs:
        raise InvalidParameter(f"no common snapshot times at or after t0={t0} (reference has {ref_times})")
    if len(pairs) < MIN_GAP_TIMES:
        logger.warning(f"time integral over {len(pairs)} common snapshot(s) only; "
                       f"give both runs a denser list of observer times")
    return pairs


def _time_norm(times, squares):
    if len(times) == 1:
        return math.sqrt(squares[0])
    return math.sqrt(max(trapezoid(squares, times), 0.0))


def velocity_gap(run, reference, t0=0.0):
    """
    Space-time L2 gaps between the two runs' velocity potentials and between
    their fluxes grad f*(w), on the coarser of the two grids.
    """
    coarse = _common_grid(run.grid, reference.grid)
    f_a, f_b = run.law.conjugate, reference.law.conjugate
    times, grad_sq, flux_sq = [], [], []
    for a, b in _common_times(run, reference, t0):
        wa, wb = restrict(a.potential, coarse), restrict(b.potential, coarse)
        diff = gradient(wa) - gradient(wb)
        grad_sq.append(face_inner(diff, diff))
        fa = restrict(ScalarField(a.grid, f_a.value_at(a.potential.values)), coarse)
        fb = restrict(ScalarField(b.grid, f_b.value_at(b.potential.values)), coarse)
        flux = gradient(fa) - gradient(fb)
        flux_sq.append(face_inner(flux, flux))
        times.append(a.t)
    return VelocityGap(_time_norm(times, grad_sq), _time_norm(times, flux_sq), tuple(times))


def pressure_gap(run, reference, t0=0.0):
    coarse = _common_grid(run.grid, reference.grid)
    times, squares = [], []
    for a, b in _common_times(run, reference, t0):
        diff = restrict(a.pressure, coarse) - restrict(b.pressure, coarse)
        squares.append(float(np.sum(diff.values ** 2)) * coarse.cell_volume)
        times.append(a.t)
    return _time_norm(times, squares)


def final_density_gap(run, reference):
    """Relative L1 distance of the final total densities on the coarser grid."""
    coarse = _common_grid(run.grid, reference.grid)
    a = restrict(run.final.total(), coarse)
    b = restrict(reference.final.total(), coarse)
    norm = b.integral()
    gap = float(np.sum(np.abs(a.values - b.values))) * coarse.cell_volume
    return gap / norm if norm > 0 else gap
