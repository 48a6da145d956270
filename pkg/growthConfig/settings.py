from pathlib import Path
from dotenv import load_dotenv
import dj_database_url
import os


load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# the default key is only good for local desk runs
SECRET_KEY = os.getenv('SECRET_KEY', 'growthlab-local-only-key')

DEBUG = os.getenv('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = [host for host in os.getenv('ALLOWED_HOSTS', '').split(',') if host]
ALLOWED_HOSTS.extend(['localhost', '127.0.0.1'])


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'rest_framework',
    'django_filters',
    'drf_spectacular',
    'core',
    'convex_energy',
    'pressure_laws',
    'field_grid',
    'helmholtz_solver',
    'brinkman_stepper',
    'darcy_stepper',
    'diagnostics',
    'experiments',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'growthConfig.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'growthConfig.wsgi.application'

# the API only browses run history, nothing is writable through it
REST_FRAMEWORK = {
    'DEFAULT_PERMISSION_CLASSES': (
        'rest_framework.permissions.AllowAny',
    ),
    'DEFAULT_FILTER_BACKENDS': (
        'django_filters.rest_framework.DjangoFilterBackend',
    ),
    'DEFAULT_SCHEMA_CLASS': 'drf_spectacular.openapi.AutoSchema',
}


# Database configuration
# SQLite is enough for run history; any DATABASE_URL is honoured
DATABASES = {
    'default': dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
        conn_max_age=600,
    )
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = '/static/'
STATIC_ROOT = os.path.join(BASE_DIR, 'staticfiles')

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

SPECTACULAR_SETTINGS = {
    'TITLE': 'GrowthLab Run History API',
    'DESCRIPTION': 'Read-only access to recorded simulation runs and their diagnostic reports.',
    'VERSION': '1.0.0',
    'SERVE_INCLUDE_SCHEMA': False,
}


# Logging
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': os.getenv('DJANGO_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}


# Numerical defaults, each one overridable with GROWTHLAB_<NAME> in the environment
def _env_number(name, default):
    raw = os.getenv(f'GROWTHLAB_{name}')
    if raw is None:
        return default
    return type(default)(float(raw)) if isinstance(default, int) else float(raw)


GROWTHLAB = {
    'TABULATION_POINTS': _env_number('TABULATION_POINTS', 4096),
    'KINK_THRESHOLD': _env_number('KINK_THRESHOLD', 1e-6),
    'BISECTION_STEPS': _env_number('BISECTION_STEPS', 80),
    'COUPLING_TOL': _env_number('COUPLING_TOL', 1e-5),
    'HELMHOLTZ_RTOL': _env_number('HELMHOLTZ_RTOL', 1e-10),
    'HELMHOLTZ_MAXITER': _env_number('HELMHOLTZ_MAXITER', 10000),
    'BOUNDARY_GUARD_CELLS': _env_number('BOUNDARY_GUARD_CELLS', 5),
    'BOUNDARY_GUARD_LEVEL': _env_number('BOUNDARY_GUARD_LEVEL', 1e-10),
    'DOMAIN_GUARD': _env_number('DOMAIN_GUARD', 1e-12),
    'MIN_DT': _env_number('MIN_DT', 1e-14),
    'MAX_STEPS': _env_number('MAX_STEPS', 5_000_000),
    'NONNEGATIVITY_FLOOR': _env_number('NONNEGATIVITY_FLOOR', 1e-12),
    'RESIDUAL_TOL': _env_number('RESIDUAL_TOL', 0.1),
    'BUDGET_CONSTANT': _env_number('BUDGET_CONSTANT', 1.0),
    'OUTPUT_DIR': os.getenv('GROWTHLAB_OUTPUT_DIR', str(BASE_DIR / 'runs')),
}
