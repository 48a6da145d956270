import uuid
from django.db import models


class ExperimentRun(models.Model):
    status_choices = [
        ('PENDING', 'Pending'),
        ('RUNNING', 'Running'),
        ('PASSED', 'Passed'),
        ('FAILED', 'Failed'),   # a check failed
        ('ERROR', 'Error'),     # the command itself raised
    ]

    command_choices = [
        ('run', 'Run'),
        ('diagnose', 'Diagnose'),
        ('convergence', 'Convergence'),
    ]

    # public reference used by the API
    uuid = models.UUIDField(default=uuid.uuid4, editable=False, unique=True)

    scenario = models.CharField(max_length=100, db_index=True)
    command = models.CharField(max_length=20, choices=command_choices)
    model = models.CharField(max_length=20)
    status = models.CharField(max_length=20, choices=status_choices, default='PENDING')

    # validated config and the sha256 of its canonical JSON form
    config = models.JSONField(default=dict)
    config_digest = models.CharField(max_length=64, db_index=True)
    output_dir = models.CharField(max_length=500)
    message = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.scenario} {self.command} ({self.status})"

    @property
    def finished(self):
        return self.status in ('PASSED', 'FAILED', 'ERROR')


class DiagnosticRecord(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='diagnostics')
    name = models.CharField(max_length=100)
    passed = models.BooleanField()
    advisory = models.BooleanField(default=False)

    # only identity reports carry a residual
    residual = models.FloatField(null=True, blank=True)
    normalized_residual = models.FloatField(null=True, blank=True)
    terms = models.JSONField(default=list, blank=True)
    checks = models.JSONField(default=list, blank=True)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['run', 'id']
        constraints = [
            models.UniqueConstraint(fields=['run', 'name'], name='unique_report_per_run'),
        ]

    def __str__(self):
        return f"{self.name}: {'pass' if self.passed else 'fail'}"
