# Generated by Django 4.2.11 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('tail', 'Probabilidad de cola'), ('lower_bound', 'Cota inferior'), ('contaminate_demo', 'Demostración con contaminación')], max_length=32, verbose_name='Comando')),
                ('scenario_id', models.CharField(max_length=255, verbose_name='Escenario')),
                ('estimator', models.CharField(max_length=255, verbose_name='Estimador')),
                ('n', models.PositiveIntegerField(verbose_name='Tamaño de muestra (n)')),
                ('d', models.PositiveIntegerField(verbose_name='Dimensión (d)')),
                ('delta', models.FloatField(blank=True, null=True, verbose_name='Nivel de confianza (delta)')),
                ('threshold', models.FloatField(verbose_name='Umbral')),
                ('exceedances', models.PositiveIntegerField(verbose_name='Excedencias')),
                ('trials', models.PositiveIntegerField(verbose_name='Réplicas')),
                ('cp_lower', models.FloatField(verbose_name='Cota inferior Clopper-Pearson')),
                ('cp_upper', models.FloatField(verbose_name='Cota superior Clopper-Pearson')),
                ('wall_time_ms', models.PositiveIntegerField(default=0, verbose_name='Tiempo de ejecución (ms)')),
                ('config', models.JSONField(blank=True, default=dict, verbose_name='Configuración')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Fecha de creación')),
            ],
            options={
                'verbose_name': 'Corrida de experimento',
                'verbose_name_plural': 'Corridas de experimentos',
                'ordering': ['-created_at'],
            },
        ),
    ]
