import uuid

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('uuid', models.UUIDField(default=uuid.uuid4, editable=False, unique=True)),
                ('scenario', models.CharField(db_index=True, max_length=100)),
                ('command', models.CharField(choices=[('run', 'Run'), ('diagnose', 'Diagnose'), ('convergence', 'Convergence')], max_length=20)),
                ('model', models.CharField(max_length=20)),
                ('status', models.CharField(choices=[('PENDING', 'Pending'), ('RUNNING', 'Running'), ('PASSED', 'Passed'), ('FAILED', 'Failed'), ('ERROR', 'Error')], default='PENDING', max_length=20)),
                ('config', models.JSONField(default=dict)),
                ('config_digest', models.CharField(db_index=True, max_length=64)),
                ('output_dir', models.CharField(max_length=500)),
                ('message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='DiagnosticRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=100)),
                ('passed', models.BooleanField()),
                ('advisory', models.BooleanField(default=False)),
                ('residual', models.FloatField(blank=True, null=True)),
                ('normalized_residual', models.FloatField(blank=True, null=True)),
                ('terms', models.JSONField(blank=True, default=list)),
                ('checks', models.JSONField(blank=True, default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='diagnostics', to='experiments.experimentrun')),
            ],
            options={
                'ordering': ['run', 'id'],
                'constraints': [models.UniqueConstraint(fields=('run', 'name'), name='unique_report_per_run')],
            },
        ),
    ]
