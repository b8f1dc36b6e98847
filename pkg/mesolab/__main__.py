"""
Console entry point: ``mesolab <experiment> [options]`` without a Django
project.  Inside a project use ``manage.py mesolab`` instead.
"""

import os
import sys

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "mesolab": {
            "handlers": ["console"],
            "level": os.environ.get("MESOLAB_LOG_LEVEL", "INFO"),
        },
    },
}


def main(argv=None):
    from django.conf import settings
    from django.core.management import ManagementUtility

    if not settings.configured:
        settings.configure(INSTALLED_APPS=["mesolab"], LOGGING=LOGGING, USE_TZ=True)
    argv = list(sys.argv if argv is None else argv)
    ManagementUtility([argv[0], "mesolab"] + argv[1:]).execute()


if __name__ == "__main__":
    main()
