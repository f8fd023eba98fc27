"""
Django settings for minimaxgof_project project.

The project has no web surface: it hosts the goodness-of-fit apps and the
``gof`` management command. Settings are read from the environment (or a
``.env`` file) with python-decouple.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-minimaxgof-batch-only-key')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'apps.families',
    'apps.extremal',
    'apps.basis',
    'apps.testing',
    'apps.sim',
    'apps.cli',
]

# Batch computations only; nothing is persisted.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Goodness-of-fit configuration

# Upper bound on N(C) for a single enumeration
MINIMAXGOF_MAX_INDICES = config('MINIMAXGOF_MAX_INDICES', default=10_000_000, cast=int)

MINIMAXGOF_DEFAULT_SEED = config('MINIMAXGOF_DEFAULT_SEED', default=20240101, cast=int)
MINIMAXGOF_DEFAULT_WORKERS = config('MINIMAXGOF_DEFAULT_WORKERS', default=1, cast=int)

# (b, B) = (1 - delta, 1 + delta) for least-favorable priors
MINIMAXGOF_PRIOR_DELTA = config('MINIMAXGOF_PRIOR_DELTA', default=0.05, cast=float)

# Allowance added to binomial error bands when comparing with asymptotic predictions
MINIMAXGOF_ASYMPTOTIC_ALLOWANCE = config('MINIMAXGOF_ASYMPTOTIC_ALLOWANCE', default=0.01, cast=float)

# Bumped whenever a JSON/CSV output layout changes
MINIMAXGOF_SCHEMA_VERSION = 1


# REST Framework Configuration (serializers only)
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'COERCE_DECIMAL_TO_STRING': False,
}


# Logging goes to stderr so command output on stdout stays machine-readable
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
