"""Configure Django so the test suite also runs under plain pytest."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'regression_mom.settings')
django.setup()


def pytest_configure(config):
    from django.db import connection
    from django.test.utils import setup_test_environment

    setup_test_environment()
    connection.creation.create_test_db(verbosity=0)
