from django.apps import AppConfig


class DarcyStepperConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'darcy_stepper'
    verbose_name = 'Darcy stepper'
