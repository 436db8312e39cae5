"""unlearnpj URL Configuration

El proyecto solo expone el gateway JSON de backends (embeddings, NLI y juez).
"""
from django.urls import path, include


urlpatterns = [
    path("", include("unlearnlab.urls")),
]
