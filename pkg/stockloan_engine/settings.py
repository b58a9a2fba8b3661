"""
Django settings for stockloan_engine project.

The project has no HTTP surface: it hosts the ``pricing`` and ``contracts``
apps and their ``stockloan`` management command. Engine defaults live in
the ``STOCKLOAN`` dict below; domain code receives them as arguments.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Optional local overrides (STOCKLOAN_LOG_LEVEL, STOCKLOAN_SEED, ...)
load_dotenv(BASE_DIR / '.env')

# Nothing is signed or served; Django still requires a key.
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'stockloan-engine-local-key')

DEBUG = os.getenv('DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'pricing',
    'contracts',
]

# No persistence layer: quotes and reports are computed, printed and written
# to files, never stored.
DATABASES = {}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Internationalization
# Numbers are always rendered with a dot decimal separator.

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging

LOG_LEVEL = os.getenv('STOCKLOAN_LOG_LEVEL', 'WARNING').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'pricing': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'contracts': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Stock loan engine defaults

STOCKLOAN = {
    'MC': {
        'N_PATHS': 200_000,
        'DT': 1.0 / 2000.0,
        'HORIZON': 200.0,  # years
        'SEED': 20240917,
        'BRIDGE_CORRECTION': True,
        'BLOCK_SIZE': 65_536,  # paths per Philox stream
        'WORKERS': 1,
        'CENSOR_WARNING_RATIO': 1e-3,
    },
    'SOLVER': {
        'MAX_ITERATIONS': 200,
        'RESIDUAL_RTOL': 1e-12,
        'EXPANSION_CAP_LOG2': 60,
        'LEFT_OFFSET': 1e-12,
        'DEGENERATE_OFFSET': 1e-9,
    },
    'VERIFY': {
        'ODE_POINTS': 200,
        'ODE_RTOL': 1e-6,
        'SMOOTH_FIT_TOL': 1e-6,
        'CONTINUITY_TOL': 1e-10,
        'SHAPE_POINTS': 500,
        'MC_SIGMAS': 3.0,
        'QUADRATURE_TOL': 1e-4,
        'CONVEXITY_POINTS': 1000,
        'CONVEXITY_EPS': 1e-8,
    },
    # Seed override from the environment; the --seed flag wins over both.
    'SEED_ENV_VAR': 'STOCKLOAN_SEED',
}
