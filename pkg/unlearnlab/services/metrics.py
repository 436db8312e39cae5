import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from django.conf import settings

from unlearnlab.services.corpus import FORGET, RETAIN, WORLD, QAExample
from unlearnlab.services.errors import BackendError, InputError, MetricError
from unlearnlab.services.seqmodel import (
    Vocab,
    collate_pairs,
    encode_prompt,
    greedy_decode_batch,
    target_logprobs,
)

"""
Métricas de evaluación (R, P, TR, TE, CS, ES) y sus agregados MU y FE.
"""
logger = logging.getLogger(__name__)

METRIC_KEYS = ('R', 'P', 'TR', 'TE', 'CS', 'ES')
REPORT_KEYS = METRIC_KEYS + ('MU', 'FE')
FORGET_KEYS = ('R', 'P', 'TR', 'CS', 'ES')
ENTAILMENT = 'entailment'
ROUGE_GATE = 0.1

# Dirección de ES: la salida implica la respuesta (forget) o la respuesta implica la salida (retain, world)
OUTPUT_ENTAILS_ANSWER = 'output-entails-answer'
ANSWER_ENTAILS_OUTPUT = 'answer-entails-output'
ES_DIRECTIONS = (OUTPUT_ENTAILS_ANSWER, ANSWER_ENTAILS_OUTPUT)


def _words(text: str) -> List[str]:
    return (text or '').strip().lower().split()


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longitud de la subsecuencia común más larga, por programación dinámica."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l_recall(candidate: str, reference: str) -> float:
    """
    ROUGE-L recall: LCS(candidate, reference) / |reference| sobre palabras en minúsculas.
    :param candidate: texto generado
    :param reference: texto de referencia (no vacío)
    :return: valor en [0, 1]
    """
    ref_words = _words(reference)
    if not ref_words:
        raise InputError('La referencia está vacía.')
    return _lcs_length(_words(candidate), ref_words) / len(ref_words)


def answer_probabilities(model, vocab: Vocab, pairs: Sequence[Tuple[str, str]]) -> List[float]:
    """
    Media aritmética de las probabilidades de los tokens de respuesta (EOS incluido), por par.
    """
    if not pairs:
        return []
    batch = collate_pairs(vocab, pairs)
    with torch.no_grad():
        probs = target_logprobs(model, batch).exp()
    mask = batch.answer_mask
    counts = mask.sum(-1)
    if (counts == 0).any():
        raise InputError('Hay respuestas sin posiciones.')
    means = torch.where(mask, probs, torch.zeros_like(probs)).sum(-1) / counts
    return means.tolist()


def answer_probability(model, vocab: Vocab, question: str, answer: str) -> float:
    return answer_probabilities(model, vocab, [(question, answer)])[0]


def mc_probability(model, vocab: Vocab, question: str, choices: Sequence[str], correct_index: int) -> float:
    """
    Probabilidad como pregunta de opción múltiple: P(correcta) / Σ P(opción).
    :param choices: al menos dos opciones
    :param correct_index: índice de la opción correcta
    """
    if len(choices) < 2:
        raise InputError('Se necesitan al menos dos opciones.')
    if not 0 <= correct_index < len(choices):
        raise InputError(f'Índice {correct_index} fuera de rango.')
    probs = answer_probabilities(model, vocab, [(question, c) for c in choices])
    return mc_share(probs, correct_index)


def mc_share(probs: Sequence[float], correct_index: int) -> float:
    total = sum(probs)
    if total <= 0:
        return 0.0
    return probs[correct_index] / total


def truth_ratio_transform(ratio: float, side: str) -> float:
    """
    retain: max(0, 1 − TR); forget: 1 − min(TR, 1/TR).
    TR infinito (paráfrasis con probabilidad 0) da 0 en ambos lados.
    """
    if math.isinf(ratio):
        return 0.0
    if side == FORGET:
        if ratio == 0:
            return 1.0
        return 1.0 - min(ratio, 1.0 / ratio)
    if side in (RETAIN, WORLD):
        return max(0.0, 1.0 - ratio)
    raise InputError(f'Lado desconocido: {side!r}.')


def truth_ratio_from_probs(paraphrase_prob: float, perturbed_probs: Sequence[float], side: str) -> float:
    if not perturbed_probs:
        raise InputError('Se necesita al menos una respuesta perturbada.')
    mean_perturbed = sum(perturbed_probs) / len(perturbed_probs)
    ratio = math.inf if paraphrase_prob == 0 else mean_perturbed / paraphrase_prob
    return truth_ratio_transform(ratio, side)


def truth_ratio(model, vocab: Vocab, question: str, paraphrase: str, perturbed: Sequence[str], side: str) -> float:
    """
    TR = media P(perturbada) / P(paráfrasis), transformada según el lado.
    :return: valor en [0, 1]
    """
    if not perturbed:
        raise InputError('Se necesita al menos una respuesta perturbada.')
    probs = answer_probabilities(model, vocab, [(question, paraphrase)] + [(question, p) for p in perturbed])
    return truth_ratio_from_probs(probs[0], probs[1:], side)


def token_entropy(generated: str) -> float:
    """
    Entropía normalizada de la frecuencia de tokens: H / log2 |g|.
    Con |g| <= 1 vale 0.
    """
    words = _words(generated)
    n = len(words)
    if n <= 1:
        return 0.0
    entropy = 0.0
    for count in Counter(words).values():
        freq = count / n
        entropy -= freq * math.log2(freq)
    return min(1.0, max(0.0, entropy / math.log2(n)))


def cosine_similarity(embedder, text_before: str, text_after: str) -> float:
    """
    max(cos(e1, e2), 0) con los vectores del embedder.
    :raises MetricError: si falla el backend
    """
    try:
        vectors = embedder.embed([text_before, text_after])
    except BackendError as exc:
        raise MetricError(f'Fallo del embedder: {exc}') from exc
    return _cosine(vectors[0], vectors[1])


def _cosine(a, b) -> float:
    value = float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))
    return min(1.0, max(0.0, value))


def _answer_rouge(generated: str, answer: str) -> float:
    if not _words(answer):
        return 0.0
    return rouge_l_recall(generated, answer)


def entailment_score(nli, pairs: Sequence[Tuple[str, str]], direction: str = OUTPUT_ENTAILS_ANSWER) -> float:
    """
    Proporción de pares clasificados como entailment.
    El filtro previo usa siempre rouge_l_recall(salida, respuesta), el mismo ROUGE que la métrica R,
    en ambas direcciones: con ROUGE < 0.1 el par cuenta como no entailment sin consultar al juez.
    :param pairs: pares (salida generada, respuesta correcta)
    :param direction: OUTPUT_ENTAILS_ANSWER (premisa = salida) o ANSWER_ENTAILS_OUTPUT (premisa = respuesta)
    """
    if direction not in ES_DIRECTIONS:
        raise InputError(f'Dirección de ES desconocida: {direction!r}.')
    if not pairs:
        raise InputError('No hay pares que evaluar.')
    hits = 0
    for generated, answer in pairs:
        if _answer_rouge(generated, answer) < ROUGE_GATE:
            continue
        premise, hypothesis = (generated, answer) if direction == OUTPUT_ENTAILS_ANSWER else (answer, generated)
        try:
            label = nli.classify(premise, hypothesis)
        except BackendError as exc:
            raise MetricError(f'Fallo del juez NLI: {exc}') from exc
        if label == ENTAILMENT:
            hits += 1
    return hits / len(pairs)


def harmonic_mean(values: Sequence[float]) -> float:
    """Media armónica; 0 si algún valor es 0."""
    if not len(values):
        raise InputError('No hay valores que promediar.')
    if 0 in values:
        return 0.0
    values = np.array(values, dtype=np.float64)
    return float(len(values) / np.sum(1.0 / values))


@dataclass
class SetMetrics:
    R: float
    P: float
    TR: float
    TE: float
    CS: float
    ES: float

    def values(self) -> List[float]:
        return [getattr(self, key) for key in METRIC_KEYS]


def model_utility(reports: Sequence[SetMetrics]) -> float:
    """
    Media armónica de todas las métricas de los conjuntos de utilidad (retain + world).
    """
    values = []
    for report in reports:
        values.extend(report.values())
    return harmonic_mean(values)


def forget_efficacy(report: SetMetrics) -> float:
    """1 − media(R, P, TR, CS, ES) en el conjunto de olvido; TE no interviene."""
    values = [getattr(report, key) for key in FORGET_KEYS]
    return 1.0 - sum(values) / len(values)


@dataclass
class MetricReport:
    sets: Dict[str, SetMetrics] = field(default_factory=dict)

    @property
    def MU(self) -> float:
        utility = [self.sets[name] for name in (RETAIN, WORLD) if name in self.sets]
        return model_utility(utility) if utility else 0.0

    @property
    def FE(self) -> float:
        return forget_efficacy(self.sets[FORGET]) if FORGET in self.sets else 0.0

    def to_dict(self) -> dict:
        mu, fe = self.MU, self.FE
        out = {}
        for name, metrics in self.sets.items():
            out[name] = {key: getattr(metrics, key) for key in METRIC_KEYS}
            out[name].update({'MU': mu, 'FE': fe})
        out['MU'] = mu
        out['FE'] = fe
        return out

    @classmethod
    def from_dict(cls, data: dict) -> 'MetricReport':
        sets = {}
        for name in (FORGET, RETAIN, WORLD):
            if name in data:
                sets[name] = SetMetrics(**{key: data[name][key] for key in METRIC_KEYS})
        return cls(sets=sets)


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


class Evaluator:
    """
    Evalúa un modelo en forget / retain / world.
    El lado "antes" de CS son las generaciones del modelo objetivo, cacheadas por pregunta.
    """

    def __init__(self, vocab: Vocab, target_model, embedder, nli, max_len: int = 32,
                 chunk: Optional[int] = None):
        self.vocab = vocab
        self.target_model = target_model
        self.embedder = embedder
        self.nli = nli
        self.max_len = max_len
        self.chunk = chunk or getattr(settings, 'UNLEARNLAB_EVAL_CHUNK', 256)
        self._target_generations: Dict[str, str] = {}

    def generate(self, model, questions: Sequence[str]) -> List[str]:
        """Generaciones voraces decodificadas a texto, por lotes."""
        texts = []
        for start in range(0, len(questions), self.chunk):
            prompts = [encode_prompt(self.vocab, q) for q in questions[start:start + self.chunk]]
            for seq in greedy_decode_batch(model, prompts, self.max_len):
                texts.append(self.vocab.decode(seq.ids))
        return texts

    def target_generations(self, questions: Sequence[str]) -> List[str]:
        missing = [q for q in dict.fromkeys(questions) if q not in self._target_generations]
        if missing:
            for question, text in zip(missing, self.generate(self.target_model, missing)):
                self._target_generations[question] = text
        return [self._target_generations[q] for q in questions]

    def _probabilities(self, model, pairs):
        probs = []
        for start in range(0, len(pairs), self.chunk):
            probs.extend(answer_probabilities(model, self.vocab, pairs[start:start + self.chunk]))
        return probs

    def evaluate_set(self, model, examples: Sequence[QAExample], name: str) -> SetMetrics:
        """
        :param name: forget, retain o world (decide TR, P y la dirección de ES)
        """
        if not examples:
            raise InputError(f'El conjunto {name} está vacío.')
        questions = [e.question for e in examples]
        generations = self.generate(model, questions)
        before = self.target_generations(questions)

        # Probabilidades de respuesta, paráfrasis y perturbadas en una sola pasada
        pairs, spans = [], []
        for e in examples:
            start = len(pairs)
            pairs.append((e.question, e.answer))
            pairs.append((e.question, e.paraphrased_answer))
            pairs.extend((e.question, p) for p in e.perturbed_answers)
            spans.append((start, len(pairs)))
        probs = self._probabilities(model, pairs)

        p_values, tr_values = [], []
        for start, end in spans:
            answer, paraphrase, perturbed = probs[start], probs[start + 1], probs[start + 2:end]
            if name == WORLD:
                p_values.append(mc_share([answer] + perturbed, 0))
            else:
                p_values.append(answer)
            tr_values.append(truth_ratio_from_probs(paraphrase, perturbed, name))

        es_direction = OUTPUT_ENTAILS_ANSWER if name == FORGET else ANSWER_ENTAILS_OUTPUT
        es_pairs = [(g, e.answer) for g, e in zip(generations, examples)]

        return SetMetrics(
            R=_mean([rouge_l_recall(g, e.answer) for g, e in zip(generations, examples)]),
            P=min(1.0, max(0.0, _mean(p_values))),
            TR=_mean(tr_values),
            TE=_mean([token_entropy(g) for g in generations]),
            CS=_mean([cosine_similarity(self.embedder, b, g) for b, g in zip(before, generations)]),
            ES=entailment_score(self.nli, es_pairs, es_direction),
        )

    def evaluate(self, model, forget: Sequence[QAExample], retain: Sequence[QAExample],
                 world: Sequence[QAExample]) -> MetricReport:
        report = MetricReport()
        for name, examples in ((FORGET, forget), (RETAIN, retain), (WORLD, world)):
            if examples:
                report.sets[name] = self.evaluate_set(model, examples, name)
        logger.info('MU=%.4f FE=%.4f', report.MU, report.FE)
        return report
