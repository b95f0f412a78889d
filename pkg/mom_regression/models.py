from django.core.exceptions import ValidationError
from django.db import models


class ExperimentRun(models.Model):
    """Resultado de una corrida Monte Carlo (una fila por estimador)."""

    COMMAND_CHOICES = [
        ('tail', 'Probabilidad de cola'),
        ('lower_bound', 'Cota inferior'),
        ('contaminate_demo', 'Demostración con contaminación'),
    ]

    # Identificación
    command = models.CharField(max_length=32, choices=COMMAND_CHOICES, verbose_name='Comando')
    scenario_id = models.CharField(max_length=255, verbose_name='Escenario')
    estimator = models.CharField(max_length=255, verbose_name='Estimador')

    # Parámetros del experimento
    n = models.PositiveIntegerField(verbose_name='Tamaño de muestra (n)')
    d = models.PositiveIntegerField(verbose_name='Dimensión (d)')
    delta = models.FloatField(null=True, blank=True, verbose_name='Nivel de confianza (delta)')
    threshold = models.FloatField(verbose_name='Umbral')

    # Resultados
    exceedances = models.PositiveIntegerField(verbose_name='Excedencias')
    trials = models.PositiveIntegerField(verbose_name='Réplicas')
    cp_lower = models.FloatField(verbose_name='Cota inferior Clopper-Pearson')
    cp_upper = models.FloatField(verbose_name='Cota superior Clopper-Pearson')
    wall_time_ms = models.PositiveIntegerField(default=0, verbose_name='Tiempo de ejecución (ms)')
    config = models.JSONField(default=dict, blank=True, verbose_name='Configuración')

    # Campos de auditoría
    created_at = models.DateTimeField(auto_now_add=True, verbose_name='Fecha de creación')

    class Meta:
        verbose_name = 'Corrida de experimento'
        verbose_name_plural = 'Corridas de experimentos'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.scenario_id} - {self.estimator} ({self.exceedances}/{self.trials})"

    @property
    def exceedance_rate(self) -> float:
        return self.exceedances / self.trials if self.trials else 0.0

    def clean(self):
        """Validaciones personalizadas."""
        if self.trials is not None and self.trials < 1:
            raise ValidationError('El número de réplicas debe ser al menos 1.')

        if self.exceedances is not None and self.trials is not None and self.exceedances > self.trials:
            raise ValidationError('Las excedencias no pueden superar el número de réplicas.')

        if self.cp_lower is not None and self.cp_upper is not None:
            if not 0 <= self.cp_lower <= self.cp_upper <= 1:
                raise ValidationError('Las cotas deben cumplir 0 <= inferior <= superior <= 1.')

        if self.delta is not None and not 0 < self.delta < 1:
            raise ValidationError('delta debe estar en el intervalo (0, 1).')
