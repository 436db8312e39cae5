from django.urls import path
from . import views

urlpatterns = [
    # Gateway de backends léxicos
    path('embed', views.embed_view, name='embed'),
    path('nli', views.nli_view, name='nli'),
    path('chat', views.chat_view, name='chat'),
]
