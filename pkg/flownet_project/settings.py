# flownet_project/settings.py
# Settings for the command-line experiment runner (no web stack, no database)

from pathlib import Path
import os

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')

# ------------------ Helpers ------------------
def env(key, default=None):
    return os.environ.get(key, default)

# ------------------ Basic ------------------
SECRET_KEY = env('SECRET_KEY', 'flownet-local-only')
DEBUG = env('DEBUG', 'False') == 'True'

# ------------------ Installed Apps ------------------
INSTALLED_APPS = [
    'flownet',
]

# Management commands and SimpleTestCase only, nothing touches a database
DATABASES = {}

# ------------------ I18N ------------------
LANGUAGE_CODE = 'en-us'
TIME_ZONE = env('TIME_ZONE', 'UTC')
USE_I18N = False
USE_TZ = True

# ------------------ Flownet numerics / runner ------------------
FLOWNET = {
    'OUTPUT_DIR': Path(env('FLOWNET_OUTPUT_DIR', BASE_DIR / 'output')),
    'WORKERS': int(env('FLOWNET_WORKERS', '1')),
    'ROOT_XTOL': float(env('FLOWNET_ROOT_XTOL', '1e-14')),
    'CFL_TOLERANCE': float(env('FLOWNET_CFL_TOLERANCE', '1e-9')),
    'SCENARIO_DIR': BASE_DIR / 'flownet' / 'scenarios',
}

# ------------------ Logging ------------------
LOG_LEVEL = env('LOG_LEVEL', 'INFO')
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {'verbose': {'format': '%(levelname)s %(asctime)s %(module)s %(message)s'}},
    'handlers': {'console': {'class': 'logging.StreamHandler', 'formatter': 'verbose'}},
    'root': {'handlers': ['console'], 'level': LOG_LEVEL},
    'loggers': {
        'flownet': {'level': env('FLOWNET_LOG_LEVEL', LOG_LEVEL), 'propagate': True},
    },
}
