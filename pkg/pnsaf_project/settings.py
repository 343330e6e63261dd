import os
from pathlib import Path
from dotenv import load_dotenv

# Charger les variables d'environnement
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-pnsaf-bench-change-me')
DEBUG = os.getenv('DJANGO_DEBUG', 'True').lower() == 'true'
ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'subband',  # Filtrage adaptatif en sous-bandes
]

# Aucun modèle : les résultats vivent sur disque (CSV + manifeste)
DATABASES = {}

LANGUAGE_CODE = 'fr-fr'
TIME_ZONE = 'Europe/Paris'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Configuration des expériences
PNSAF_OUTPUT_DIR = Path(os.getenv('PNSAF_OUTPUT_DIR', BASE_DIR / 'results'))
PNSAF_CONFIG_DIR = BASE_DIR / 'subband' / 'configs'
PNSAF_MAX_WORKERS = int(os.getenv('PNSAF_MAX_WORKERS', os.cpu_count() or 1))

# Configuration pour les logs
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'subband': {
            'handlers': ['console'],
            'level': os.getenv('PNSAF_LOG_LEVEL', 'INFO'),
        },
    },
}
