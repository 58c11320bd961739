"""
Django settings for the idsakit project.

For more information on this file, see
https://docs.djangoproject.com/en/3.2/topics/settings/

Any setting that is configured via an environment variable may
also be set in a `.env` file in the project base directory.
"""
from os import path

from environs import Env


# Build paths inside the project like this: path.join(BASE_DIR, ...)
BASE_DIR = path.dirname(path.dirname(path.abspath(__file__)))

env = Env()
env.read_env(path.join(BASE_DIR, '.env'), recurse=False)


SECRET_KEY = env('SECRET_KEY', 'idsakit-is-a-batch-tool-and-serves-no-requests')

DEBUG = env.bool('DEBUG', False)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'transport.apps.TransportConfig',
    'harness.apps.HarnessConfig',
]

# Solvers keep no persistent state.
DATABASES = {}


# Physical constants and discretization defaults

SPEED_OF_LIGHT = env.float('SPEED_OF_LIGHT', 2.99792458e10)

DEFAULT_ORDINATES = env.int('DEFAULT_ORDINATES', 8)

DEFAULT_GROUP_RATIO = env.float('DEFAULT_GROUP_RATIO', 1.3)

# optical depth defining the scattering sphere
TAU_THRESHOLD = env.float('TAU_THRESHOLD', 2.0 / 3.0)


# Time stepping

CFL_LIMIT = env.float('CFL_LIMIT', 1.0)
CFL_TARGET = env.float('CFL_TARGET', 0.8)

DEFAULT_IMPLICIT_STEPS = env.int('DEFAULT_IMPLICIT_STEPS', 200)

# worker cap for per-group solves and sweep members
THREADS = env.int('THREADS', 1)


# Verification tolerances

BALANCE_TOLERANCE = env.float('BALANCE_TOLERANCE', 1e-10)
CLOSURE_TOLERANCE = env.float('CLOSURE_TOLERANCE', 1e-10)
HIERARCHY_TOLERANCE = env.float('HIERARCHY_TOLERANCE', 1e-10)

SWEEP_SLOPES = {
    'diffusion': env.float('SWEEP_SLOPE_DIFFUSION', 1.8),
    'reaction': env.float('SWEEP_SLOPE_REACTION', 0.8),
    'free_streaming': env.float('SWEEP_SLOPE_FREE_STREAMING', 0.8),
    'free_streaming_second_order': env.float('SWEEP_SLOPE_FREE_STREAMING_SECOND_ORDER', 1.8),
}

# sweep errors at or below this are round-off
SWEEP_ROUNDOFF = env.float('SWEEP_ROUNDOFF', 1e-12)


# Logging

LOG_LEVEL = env('LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'transport': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
        },
        'harness': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
        },
    },
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

TEST_RUNNER = 'xmlrunner.extra.djangotestrunner.XMLTestRunner'
TEST_OUTPUT_DIR = path.join(BASE_DIR, 'junitxml')
