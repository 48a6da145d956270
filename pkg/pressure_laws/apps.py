from django.apps import AppConfig


class PressureLawsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pressure_laws'
    verbose_name = 'Pressure laws'
