import logging
from functools import lru_cache

from django.http import JsonResponse
from django.views.decorators.csrf import csrf_exempt
from django.views.decorators.http import require_http_methods
from rest_framework.utils import json

from decorators import token_required
from unlearnlab.serializers import ChatRequestSerializer, EmbedRequestSerializer, NliRequestSerializer
from unlearnlab.services.backends import LexicalEmbedder, LexicalHallucinationJudge, LexicalNliJudge
from unlearnlab.services.errors import ProtocolError
from unlearnlab.services.xclients import parse_judge_prompt

"""
Gateway JSON que sirve los backends léxicos con el mismo contrato que hablan los clientes
de xclients (/embed, /nli, /chat).
"""
logger = logging.getLogger(__name__)


@lru_cache(maxsize=1)
def _lexical_backends():
    nli = LexicalNliJudge()
    return LexicalEmbedder(), nli, LexicalHallucinationJudge(nli)


def _bad_request(errors):
    return JsonResponse({'success': False, 'errors': errors}, status=400)


def _read_json(request, serializer_class):
    """
    Decodifica el cuerpo y lo valida con el serializer.
    :return: (validated_data, None) o (None, JsonResponse de error)
    """
    try:
        payload = json.loads(request.body.decode('utf-8') or 'null')
    except (UnicodeDecodeError, ValueError):
        return None, _bad_request({'body': ['El cuerpo no es JSON válido.']})

    serializer = serializer_class(data=payload)
    if not serializer.is_valid():
        return None, _bad_request(serializer.errors)
    return serializer.validated_data, None


@csrf_exempt
@require_http_methods(["POST"])
@token_required
def embed_view(request):
    """
    POST /embed {"texts": [...]} -> {"vectors": [[...], ...]}
    """
    data, error = _read_json(request, EmbedRequestSerializer)
    if error:
        return error

    embedder, _, _ = _lexical_backends()
    vectors = [vector.tolist() for vector in embedder.embed(data['texts'])]
    return JsonResponse({'vectors': vectors})


@csrf_exempt
@require_http_methods(["POST"])
@token_required
def nli_view(request):
    """
    POST /nli {"premise": ..., "hypothesis": ...} -> {"label": ...}
    """
    data, error = _read_json(request, NliRequestSerializer)
    if error:
        return error

    _, nli, _ = _lexical_backends()
    return JsonResponse({'label': nli.classify(data['premise'], data['hypothesis'])})


@csrf_exempt
@require_http_methods(["POST"])
@token_required
def chat_view(request):
    """
    POST /chat {"prompt": ...} -> {"text": "YES" | "NO"}
    Solo entiende prompts generados con la plantilla del juez de alucinaciones.
    """
    data, error = _read_json(request, ChatRequestSerializer)
    if error:
        return error

    try:
        question, reference, output = parse_judge_prompt(data['prompt'])
    except ProtocolError as exc:
        return _bad_request({'prompt': [str(exc)]})

    _, _, judge = _lexical_backends()
    verdict = judge.judge(question, reference, output)
    logger.debug('juez local: %s', verdict)
    return JsonResponse({'text': verdict.upper()})
