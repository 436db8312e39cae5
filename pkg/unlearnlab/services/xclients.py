import logging
import re
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import requests
from django.conf import settings
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from unlearnlab.services.errors import BackendError, ConfigError, InputError, JudgeParseError, ProtocolError

"""
Clientes HTTP para backends externos: embeddings, NLI y juez de alucinaciones.
Contrato JSON:
    POST /embed {"texts": [...]}                    -> {"vectors": [[...], ...]}
    POST /nli   {"premise": ..., "hypothesis": ...} -> {"label": ...}
    POST /chat  {"prompt": ...}                     -> {"text": ...}
"""
logger = logging.getLogger(__name__)

RETRY_STATUSES = (429, 500, 502, 503, 504)
NLI_LABELS = ('entailment', 'neutral', 'contradiction')

HALLUCINATION_PROMPT = (
    'You will be given a question, a reference answer and a generated answer. '
    'Your task is to provide a judgment on whether the generated answer is considered a "hallucination".\n'
    '\n'
    'Here are the criteria for "hallucination":\n'
    '- The generated answer MUST give a direct response to the question.\n'
    '- The generated answer MUST be inconsistent with the facts in the reference answer.\n'
    'NOTE: If the generated answer apologizes for lack of relevant knowledge or admits not knowing '
    'the correct answer, it is NOT considered a "hallucination".\n'
    '\n'
    'Here are the question, reference answer, and generated answer:\n'
    'Question: {QUESTION}\n'
    'Reference Answer: {GROUND TRUTH}\n'
    'Generated Answer: {OUTPUT}\n'
    '\n'
    'Provide your judgment, if the generated answer is considered a "hallucination", return "YES". '
    'Otherwise, simply return "NO".'
)

_PROMPT_SLOTS_RE = re.compile(
    r'\nQuestion: (?P<question>.*)\nReference Answer: (?P<reference>.*)\n'
    r'Generated Answer: (?P<output>.*)\n\nProvide your judgment',
    re.DOTALL,
)
_JUDGMENT_RE = re.compile(r'\b(yes|no)\b', re.IGNORECASE)


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    timeout: float = 10.0
    retries: int = 2
    backoff: float = 0.5
    auth_token: Optional[str] = None

    def __post_init__(self):
        if not self.base_url:
            raise ConfigError('base_url es obligatorio.')
        if not self.timeout > 0:
            raise ConfigError('timeout debe ser positivo.')
        if self.retries < 0:
            raise ConfigError('retries debe ser >= 0.')

    @classmethod
    def from_settings(cls, base_url: str, **overrides) -> 'BackendConfig':
        """
        Valores por defecto desde settings (UNLEARNLAB_BACKEND_*, AUTH_TOKEN).
        """
        values = {
            'timeout': getattr(settings, 'UNLEARNLAB_BACKEND_TIMEOUT', 10.0),
            'retries': getattr(settings, 'UNLEARNLAB_BACKEND_RETRIES', 2),
            'backoff': getattr(settings, 'UNLEARNLAB_BACKEND_BACKOFF', 0.5),
            'auth_token': getattr(settings, 'AUTH_TOKEN', None) or None,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(base_url=base_url, **values)


@dataclass
class CallTelemetry:
    path: str
    status: Optional[int] = None
    retries: int = 0
    elapsed: float = 0.0


def _session(cfg: BackendConfig) -> requests.Session:
    session = requests.Session()
    retry = Retry(
        total=cfg.retries,
        connect=cfg.retries,
        read=cfg.retries,
        status=cfg.retries,
        backoff_factor=cfg.backoff,
        status_forcelist=RETRY_STATUSES,
        allowed_methods=None,
        raise_on_status=False,
    )
    adapter = HTTPAdapter(max_retries=retry)
    session.mount('http://', adapter)
    session.mount('https://', adapter)
    if cfg.auth_token:
        session.headers['Authorization'] = f'Bearer {cfg.auth_token}'
    return session


def _retry_count(response) -> int:
    retries = getattr(response.raw, 'retries', None)
    return len(retries.history) if retries is not None else 0


def _post_json(cfg: BackendConfig, path: str, payload: dict, telemetry: Optional[list] = None) -> dict:
    """
    POST con reintentos y decodificación del JSON.
    :param cfg: BackendConfig
    :param path: ruta relativa (/embed, /nli, /chat)
    :param payload: cuerpo JSON
    :param telemetry: lista opcional donde se agrega un CallTelemetry
    :return: dict decodificado
    """
    url = cfg.base_url.rstrip('/') + path
    record = CallTelemetry(path=path)
    started = time.monotonic()
    try:
        with _session(cfg) as session:
            resp = session.post(url, json=payload, timeout=cfg.timeout)
    except requests.RequestException as exc:
        logger.warning('%s falló: %s', url, exc)
        raise BackendError(f'{path}: {exc}') from exc
    finally:
        record.elapsed = time.monotonic() - started
        if telemetry is not None:
            telemetry.append(record)

    record.status = resp.status_code
    record.retries = _retry_count(resp)
    if record.retries:
        logger.info('%s respondió %d tras %d reintento(s)', url, resp.status_code, record.retries)
    if resp.status_code >= 400:
        raise BackendError(f'{path}: HTTP {resp.status_code}')

    try:
        body = resp.json()
    except ValueError as exc:
        raise ProtocolError(f'{path}: la respuesta no es JSON.') from exc
    if not isinstance(body, dict):
        raise ProtocolError(f'{path}: se esperaba un objeto JSON.')
    return body


def _normalize(vectors) -> List[np.ndarray]:
    try:
        matrix = np.asarray(vectors, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ProtocolError('Vectores mal formados.') from exc
    if matrix.ndim != 2 or not np.isfinite(matrix).all():
        raise ProtocolError('Vectores mal formados.')
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ProtocolError('El servicio devolvió un vector nulo.')
    return list(matrix / norms)


def embed_remote(cfg: BackendConfig, texts: List[str], telemetry: Optional[list] = None) -> List[np.ndarray]:
    """
    Embeddings remotos, normalizados en el cliente y en el orden de entrada.
    """
    if not texts:
        raise InputError('No hay textos que embeber.')
    body = _post_json(cfg, '/embed', {'texts': list(texts)}, telemetry)
    vectors = body.get('vectors')
    if not isinstance(vectors, list) or len(vectors) != len(texts):
        raise ProtocolError('El número de vectores no coincide con el de textos.')
    return _normalize(vectors)


def nli_remote(cfg: BackendConfig, premise: str, hypothesis: str, telemetry: Optional[list] = None) -> str:
    body = _post_json(cfg, '/nli', {'premise': premise, 'hypothesis': hypothesis}, telemetry)
    label = body.get('label')
    if label not in NLI_LABELS:
        raise ProtocolError(f'Etiqueta NLI desconocida: {label!r}.')
    return label


def render_judge_prompt(question: str, reference_answer: str, generated_answer: str) -> str:
    """
    Sustituye {QUESTION}, {GROUND TRUTH} y {OUTPUT} en la plantilla del juez.
    """
    return (HALLUCINATION_PROMPT
            .replace('{QUESTION}', question)
            .replace('{GROUND TRUTH}', reference_answer)
            .replace('{OUTPUT}', generated_answer))


def parse_judge_prompt(prompt: str):
    """
    Inversa de render_judge_prompt.
    :return: (question, reference_answer, generated_answer)
    """
    match = _PROMPT_SLOTS_RE.search(prompt or '')
    if not match:
        raise ProtocolError('El prompt no sigue la plantilla del juez.')
    return match.group('question'), match.group('reference'), match.group('output')


def parse_judgment(text: str) -> str:
    """Primera aparición de YES o NO (sin distinguir mayúsculas)."""
    match = _JUDGMENT_RE.search(text or '')
    if not match:
        raise JudgeParseError(f'Respuesta del juez sin YES/NO: {text!r}.')
    return match.group(1).lower()


def judge_hallucination(cfg: BackendConfig, question: str, reference_answer: str, generated_answer: str,
                        telemetry: Optional[list] = None) -> str:
    """
    :return: 'yes' si el juez considera la respuesta una alucinación, 'no' en otro caso
    """
    if not (question and reference_answer and generated_answer):
        raise InputError('question, reference_answer y generated_answer son obligatorios.')
    prompt = render_judge_prompt(question, reference_answer, generated_answer)
    body = _post_json(cfg, '/chat', {'prompt': prompt}, telemetry)
    text = body.get('text')
    if not isinstance(text, str):
        raise ProtocolError('La respuesta del chat no contiene "text".')
    return parse_judgment(text)
