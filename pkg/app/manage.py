#!/usr/bin/env python
"""Entry point for the idsakit commands: run, run_boltzmann, run_idsa, compare,
hierarchy_check and epsilon_sweep, plus `test` for the suites."""
import os
import sys


def main():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'app.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError('idsakit needs Django on the PYTHONPATH; install it with `pip install -e .`') from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
