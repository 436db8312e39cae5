import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'unlearnpj.settings')
django.setup()
