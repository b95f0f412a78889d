"""Django settings for regression_mom project (library, CLI and results store)."""
from pathlib import Path
import os

import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; no request handling happens in this project.
SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'replace-this-with-a-secure-key')

DEBUG = os.environ.get('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = os.environ.get('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'mom_regression',
]

# Database
# Use PostgreSQL in production (via DATABASE_URL env var), SQLite for local runs
DATABASES = {
    'default': dj_database_url.config(
        default=f'sqlite:///{BASE_DIR / "db.sqlite3"}',
        conn_max_age=600,
        conn_health_checks=True,
    )
}

LANGUAGE_CODE = 'es-mx'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging: everything goes to standard error so CSV on standard output stays clean
MOM_LOG_LEVEL = os.environ.get('MOM_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'mom_regression': {
            'handlers': ['console'],
            'level': MOM_LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Median-of-means configuration (can be overridden with environment variables)
# Two-sided level of the exact binomial (Clopper-Pearson) intervals
MOM_CP_LEVEL = float(os.environ.get('MOM_CP_LEVEL', '0.95'))
# Upper limit on K^d cells enumerated by the uniform partition error
MOM_MAX_PARTITION_CELLS = int(os.environ.get('MOM_MAX_PARTITION_CELLS', str(10 ** 6)))
# Worker processes for Monte Carlo trial loops when --jobs is not given
MOM_DEFAULT_JOBS = int(os.environ.get('MOM_DEFAULT_JOBS', '1'))
# Disable to write wall_time_ms = 0 and get byte-comparable result files
MOM_REPORT_WALL_TIME = os.environ.get('MOM_REPORT_WALL_TIME', 'True') == 'True'
