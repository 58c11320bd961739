"""Pytest collection wiring for the Django test suites under app/.

The suites are written for `app/manage.py test`, which runs with app/ on
sys.path and DJANGO_SETTINGS_MODULE=app.settings. Mirror that here and import
each test module under the same dotted name the Django runner uses
(e.g. `harness.tests.test_config`), so `transport.*` and the relative imports
in the tests resolve to the same module objects.
"""
import importlib
import os
import sys

import pytest

APP_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'app')

if APP_DIR in sys.path:
    sys.path.remove(APP_DIR)
sys.path.insert(0, APP_DIR)
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'app.settings')

import django  # noqa: E402

django.setup()


class AppModule(pytest.Module):
    def _getobj(self):
        rel = os.path.relpath(str(self.path), APP_DIR)
        name = os.path.splitext(rel)[0].replace(os.sep, '.')
        return importlib.import_module(name)


def pytest_pycollect_makemodule(module_path, parent):
    path = str(module_path)
    if path.startswith(APP_DIR + os.sep):
        return AppModule.from_parent(parent, path=module_path)
    return None
