from django.apps import AppConfig


class BrinkmanStepperConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'brinkman_stepper'
    verbose_name = 'Brinkman stepper'
