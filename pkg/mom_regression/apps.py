from django.apps import AppConfig


class MomRegressionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'mom_regression'
    verbose_name = 'Regresión robusta (mediana de medias)'
