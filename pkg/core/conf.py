from django.conf import settings

# fallbacks used when a settings module does not define the GROWTHLAB dict
DEFAULTS = {
    'TABULATION_POINTS': 4096,
    'KINK_THRESHOLD': 1e-6,
    'BISECTION_STEPS': 80,
    'COUPLING_TOL': 1e-5,
    'HELMHOLTZ_RTOL': 1e-10,
    'HELMHOLTZ_MAXITER': 10000,
    'BOUNDARY_GUARD_CELLS': 5,
    'BOUNDARY_GUARD_LEVEL': 1e-10,
    'DOMAIN_GUARD': 1e-12,
    'MIN_DT': 1e-14,
    'MAX_STEPS': 5_000_000,
    'NONNEGATIVITY_FLOOR': 1e-12,
    'RESIDUAL_TOL': 0.1,
    'BUDGET_CONSTANT': 1.0,
    'OUTPUT_DIR': 'runs',
}


def growthlab_setting(name):
    """Read one numerical default from settings.GROWTHLAB."""
    configured = getattr(settings, 'GROWTHLAB', {})
    if name in configured:
        return configured[name]
    return DEFAULTS[name]
