# experiments/signals.py
import logging
from django.db.models.signals import post_save
from django.dispatch import receiver
from .models import DiagnosticRecord

logger = logging.getLogger(__name__)


@receiver(post_save, sender=DiagnosticRecord)
def fail_run_on_failing_report(sender, instance, created, **kwargs):
    """
    A failing, non-advisory report marks its run FAILED as soon as it is stored.
    """
    if instance.passed or instance.advisory:
        return
    try:
        run = instance.run
        if run.status not in ('FAILED', 'ERROR'):
            run.status = 'FAILED'
            run.save(update_fields=['status'])
    except Exception as e:
        logger.error(f"Failed to mark run {instance.run_id} as failed after report {instance.name}: {str(e)}")
