from django.apps import AppConfig


class SubbandConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'subband'
    verbose_name = 'Filtrage adaptatif en sous-bandes'
