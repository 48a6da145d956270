from django.apps import AppConfig


class ConvexEnergyConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'convex_energy'
    verbose_name = 'Convex energies'
