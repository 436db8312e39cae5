import hashlib
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from unlearnlab.services import xclients
from unlearnlab.services.corpus import attribute_pools
from unlearnlab.services.metrics import ENTAILMENT, rouge_l_recall
from unlearnlab.services.seqmodel import PUNCTUATION, tokenize

"""
Backends por defecto (léxicos, deterministas, sin red) y adaptadores remotos.
Interfaz común:
    embedder.embed(texts) -> lista de vectores de norma 1
    nli.classify(premise, hypothesis) -> entailment | neutral | contradiction
    judge.judge(question, reference, output) -> yes | no
"""
logger = logging.getLogger(__name__)

EMBED_DIM = 256
ENTAILMENT_THRESHOLD = 0.6
NEUTRAL, CONTRADICTION = 'neutral', 'contradiction'
SUBJECT_POOLS = ('first_name', 'last_name')

REFUSAL_CUES = (
    ("don't", 'know'), ('no', 'idea'), ('not', 'sure'), ('cannot', 'answer'), ('not', 'something'),
)


def _content_tokens(text: str) -> List[str]:
    return [tok for tok in tokenize(text) if not (len(tok) == 1 and tok in PUNCTUATION)]


def _contains(tokens: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    return any(tuple(tokens[i:i + n]) == tuple(needle) for i in range(len(tokens) - n + 1))


class LexicalEmbedder:
    """
    Vector de conteos de tokens por hashing, dimensión 256, normalizado L2.
    El cubo 0 queda reservado para el texto vacío.
    """

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode('utf-8')).digest()
        return 1 + int.from_bytes(digest[:8], 'big') % (self.dim - 1)

    def embed_one(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        tokens = _content_tokens(text)
        if not tokens:
            vector[0] = 1.0
            return vector
        for tok in tokens:
            vector[self.bucket(tok)] += 1.0
        return vector / np.linalg.norm(vector)

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        return [self.embed_one(t) for t in texts]


class LexicalNliJudge:
    """
    NLI léxico sobre la estructura de slots del corpus:
    contradicción si la hipótesis nombra un atributo ausente en la premisa mientras la premisa
    nombra otro que la hipótesis omite, aunque sean de slots distintos (los nombres de autor
    solo chocan entre sí),
    entailment si el ROUGE-L recall de la hipótesis contra la premisa es >= 0.6,
    neutral en otro caso.
    """

    def __init__(self, pools: Optional[Dict[str, Sequence[str]]] = None, threshold: float = ENTAILMENT_THRESHOLD):
        pools = pools if pools is not None else attribute_pools()
        self.threshold = threshold
        # Los nombres identifican al sujeto; el resto de pools se comparan juntos
        self._groups: Tuple[Tuple[Tuple[str, ...], ...], ...] = tuple(
            tuple(sorted({tuple(tokenize(v)) for name, values in pools.items() for v in values
                          if (name in SUBJECT_POOLS) == subject}))
            for subject in (True, False)
        )

    def conflicts(self, premise: str, hypothesis: str) -> bool:
        p_tokens, h_tokens = tokenize(premise), tokenize(hypothesis)
        for group in self._groups:
            in_premise = {value for value in group if _contains(p_tokens, value)}
            in_hypothesis = {value for value in group if _contains(h_tokens, value)}
            if in_hypothesis - in_premise and in_premise - in_hypothesis:
                return True
        return False

    def classify(self, premise: str, hypothesis: str) -> str:
        if not _content_tokens(hypothesis):
            return NEUTRAL
        if self.conflicts(premise, hypothesis):
            return CONTRADICTION
        if rouge_l_recall(premise, hypothesis) >= self.threshold:
            return ENTAILMENT
        return NEUTRAL


class LexicalHallucinationJudge:
    """
    Juez local con los criterios del prompt de alucinación:
    una negativa o respuesta vacía no es alucinación; una respuesta coherente con la referencia tampoco.
    """

    def __init__(self, nli: Optional[LexicalNliJudge] = None):
        self.nli = nli or LexicalNliJudge()

    @staticmethod
    def is_refusal(text: str) -> bool:
        tokens = _content_tokens(text)
        return not tokens or any(_contains(tokens, cue) for cue in REFUSAL_CUES)

    def judge(self, question: str, reference_answer: str, generated_answer: str) -> str:
        if self.is_refusal(generated_answer):
            return 'no'
        if self.nli.classify(reference_answer, generated_answer) == ENTAILMENT:
            return 'no'
        return 'yes'


class RemoteEmbedder:

    def __init__(self, cfg: xclients.BackendConfig):
        self.cfg = cfg
        self.telemetry: list = []

    def embed(self, texts: Sequence[str]) -> List[np.ndarray]:
        return xclients.embed_remote(self.cfg, list(texts), self.telemetry)


class RemoteNliJudge:

    def __init__(self, cfg: xclients.BackendConfig):
        self.cfg = cfg
        self.telemetry: list = []

    def classify(self, premise: str, hypothesis: str) -> str:
        return xclients.nli_remote(self.cfg, premise, hypothesis, self.telemetry)


class RemoteHallucinationJudge:

    def __init__(self, cfg: xclients.BackendConfig):
        self.cfg = cfg
        self.telemetry: list = []

    def judge(self, question: str, reference_answer: str, generated_answer: str) -> str:
        # El servicio exige textos no vacíos; una salida vacía es una negativa
        if not generated_answer.strip():
            return 'no'
        return xclients.judge_hallucination(self.cfg, question, reference_answer, generated_answer, self.telemetry)


def build_backends(base_url: Optional[str] = None, **overrides):
    """
    Backends de métricas: léxicos por defecto, remotos si hay base_url.
    :return: (embedder, nli, hallucination_judge)
    """
    if not base_url:
        nli = LexicalNliJudge()
        return LexicalEmbedder(), nli, LexicalHallucinationJudge(nli)
    cfg = xclients.BackendConfig.from_settings(base_url, **overrides)
    logger.info('usando backends remotos en %s', base_url)
    return RemoteEmbedder(cfg), RemoteNliJudge(cfg), RemoteHallucinationJudge(cfg)
