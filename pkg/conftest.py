import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'pnsaf_project.settings')
django.setup()
