from django.apps import AppConfig


class FieldGridConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'field_grid'
    verbose_name = 'Field grids'
