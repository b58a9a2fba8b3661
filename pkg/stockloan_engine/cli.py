"""
Console entry point for the ``stockloan`` command.

``stockloan price --config loan.env`` is the same as
``python manage.py stockloan price --config loan.env``.
"""

import os
import sys


def main():
    """Dispatch ``stockloan <command> ...`` to the management command."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'stockloan_engine.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install the stockloan engine with its "
            "dependencies before running the stockloan command."
        ) from exc
    execute_from_command_line(['stockloan', 'stockloan', *sys.argv[1:]])


if __name__ == '__main__':
    main()
