"""
Django settings for unlearnpj project.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-unlearnlab-dev-only')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv('DEBUG', '1') == '1'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', '').split(',') if os.getenv('ALLOWED_HOSTS') else ['127.0.0.1', 'localhost', 'testserver']


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'unlearnlab.apps.UnlearnlabConfig',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'unlearnpj.urls'

WSGI_APPLICATION = 'unlearnpj.wsgi.application'


# Database
# El laboratorio no persiste nada en base de datos; sqlite solo para el runner de tests

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

STATIC_URL = '/static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}


# Logging

UNLEARNLAB_LOG_LEVEL = os.getenv('UNLEARNLAB_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'bracketed': {
            'format': '[%(name)s] %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'bracketed',
        },
    },
    'loggers': {
        'unlearnlab': {
            'handlers': ['console'],
            'level': UNLEARNLAB_LOG_LEVEL,
            'propagate': False,
        },
    },
}


# Configuraciones del laboratorio
UNLEARNLAB_OUTPUT_DIR = os.getenv('UNLEARNLAB_OUTPUT_DIR', str(BASE_DIR / 'out'))

# Backends HTTP (embeddings, NLI, juez)
UNLEARNLAB_BACKEND_TIMEOUT = 10.0
UNLEARNLAB_BACKEND_RETRIES = 2
UNLEARNLAB_BACKEND_BACKOFF = 0.5

# En False los registros llevan wall_time = 0 (salida byte a byte reproducible)
UNLEARNLAB_RECORD_WALL_TIME = os.getenv('UNLEARNLAB_RECORD_WALL_TIME', '1') == '1'

# Tamaño de lote para generación y probabilidades en la evaluación
UNLEARNLAB_EVAL_CHUNK = 256

# Token bearer para los backends remotos y el gateway
AUTH_TOKEN = os.getenv('AUTH_TOKEN')
