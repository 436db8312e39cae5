from django.apps import AppConfig


class UnlearnlabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'unlearnlab'
    verbose_name = 'Laboratorio de desaprendizaje'
