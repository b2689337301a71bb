import os
import environ
from pathlib import Path

env = environ.Env(
    PROD=(bool, False),
    DEBUG=(bool, False),
    LOG_LEVEL=(str, "INFO"),
    CLUSTER_AUGMENT_WORKERS=(int, 1),
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Take environment variables from .env file
environ.Env.read_env(os.path.join(BASE_DIR, ".env"))

PROD = env("PROD")
DEBUG = env("DEBUG")

# Only used by Django internals; nothing here signs user data.
SECRET_KEY = env("SECRET_KEY", default="cluster-augment-insecure-development-key")

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.auth",
    "django.contrib.contenttypes",
    # 3rd party
    "rest_framework",
    # local
    "core",
    "corpus",
    "embedding",
    "clustering",
    "propagation",
    "tuning",
    "classifier",
    "synthgen",
]


# Database
# https://docs.djangoproject.com/en/4.1/ref/settings/#databases

if env("PROD"):
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": env("DB_NAME"),
            "USER": env("DB_USER"),
            "PASSWORD": env("DB_PASS"),
            "HOST": env("DB_HOST"),
            "PORT": env("DB_PORT"),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": BASE_DIR / "db.sqlite3",
        }
    }


# Internationalization
# https://docs.djangoproject.com/en/4.1/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/4.1/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Pipeline

CLUSTER_AUGMENT_WORKERS = env("CLUSTER_AUGMENT_WORKERS")
CLUSTER_AUGMENT_OUTPUT_DIR = Path(
    env("CLUSTER_AUGMENT_OUTPUT_DIR", default=str(BASE_DIR / "runs"))
)
CLUSTER_AUGMENT_VERSION = "1.0.0"


# Logging

LOG_LEVEL = env("LOG_LEVEL").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "console": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "console",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": LOG_LEVEL,
    },
    "loggers": {
        app: {"level": LOG_LEVEL, "propagate": True}
        for app in [
            "core",
            "corpus",
            "embedding",
            "clustering",
            "propagation",
            "tuning",
            "classifier",
            "synthgen",
        ]
    },
}
