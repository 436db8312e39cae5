from functools import wraps

from django.conf import settings
from django.http import JsonResponse


def token_required(view_func):
    """
    Decorador para el gateway de backends:
    - Si AUTH_TOKEN está configurado exige la cabecera Authorization: Bearer <token>
    - Sin AUTH_TOKEN el acceso es libre (uso local)
    """

    @wraps(view_func)
    def wrapper(request, *args, **kwargs):
        expected = getattr(settings, 'AUTH_TOKEN', None)
        if not expected:
            return view_func(request, *args, **kwargs)

        # Verificar la cabecera
        header = request.headers.get('Authorization', '')
        scheme, _, token = header.partition(' ')
        if scheme.lower() == 'bearer' and token.strip() == expected:
            return view_func(request, *args, **kwargs)

        return JsonResponse({'success': False, 'errors': {'auth': ['Token inválido o ausente.']}}, status=401)

    return wrapper
