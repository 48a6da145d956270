"""
WSGI entry point for the run-history browser (admin + read-only API).

Simulations never run inside a request; they are driven by the management
commands in the experiments app.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'growthConfig.settings')

application = get_wsgi_application()
