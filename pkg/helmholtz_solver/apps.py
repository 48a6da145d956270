from django.apps import AppConfig


class HelmholtzSolverConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'helmholtz_solver'
    verbose_name = 'Helmholtz solver'
