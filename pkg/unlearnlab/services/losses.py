import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from unlearnlab.services.corpus import QAExample, idk_sample
from unlearnlab.services.errors import ConfigError, InputError
from unlearnlab.services.seqmodel import (
    ANSWER,
    Batch,
    Vocab,
    batch_logprobs,
    batch_sequence_logprob,
    collate_pairs,
)

"""
Pérdidas de olvido (GA, NPO, DPO, IDK, ME) y de regularización (GD, KL, AP),
y el combinador que forma un método con nombre ("ME+GD", "IDK+AP", ...).
Todas son escalares diferenciables respecto a los parámetros del modelo.
"""

FORGET_LOSSES = ('GA', 'NPO', 'DPO', 'IDK', 'ME')
REG_LOSSES = ('GD', 'KL', 'AP', 'none')
NEEDS_TEMPLATES = ('DPO', 'IDK', 'AP')

METHODS = (
    'GA+GD', 'GA+KL', 'NPO+GD', 'NPO+KL', 'DPO+GD', 'DPO+KL', 'IDK+GD',
    'ME+GD', 'ME+KL', 'IDK+AP', 'DPO+AP',
)


@dataclass(frozen=True)
class LossConfig:
    """
    Determina un método de olvido.
    question_masking None usa el valor por defecto de la pérdida (ME sin máscara, resto con máscara).
    """

    forget_loss: str
    reg_loss: str = 'none'
    alpha: float = 1.0
    beta: float = 0.1
    question_masking: Optional[bool] = None

    def __post_init__(self):
        if self.forget_loss not in FORGET_LOSSES:
            raise ConfigError(f'Pérdida de olvido desconocida: {self.forget_loss!r}.')
        if self.reg_loss not in REG_LOSSES:
            raise ConfigError(f'Regularizador desconocido: {self.reg_loss!r}.')
        if not self.beta > 0:
            raise ConfigError('beta debe ser positivo.')
        if self.alpha < 0:
            raise ConfigError('alpha debe ser no negativo.')

    @classmethod
    def from_method(cls, method: str, **kwargs) -> 'LossConfig':
        """
        :param method: "GA+GD", "ME+GD", ... o una pérdida sola ("GA")
        """
        forget, _, reg = (method or '').partition('+')
        return cls(forget_loss=forget, reg_loss=reg or 'none', **kwargs)

    @property
    def method(self) -> str:
        if self.reg_loss == 'none':
            return self.forget_loss
        return f'{self.forget_loss}+{self.reg_loss}'

    @property
    def masks_forget_question(self) -> bool:
        if self.question_masking is None:
            return self.forget_loss != 'ME'
        return self.question_masking

    @property
    def forget_region(self) -> str:
        return ANSWER if self.masks_forget_question else 'all'

    @property
    def needs_templates(self) -> bool:
        return self.forget_loss in NEEDS_TEMPLATES or self.reg_loss in NEEDS_TEMPLATES

    @property
    def needs_reference(self) -> bool:
        return self.forget_loss in ('NPO', 'DPO') or self.reg_loss == 'KL'

    @property
    def forget_weight(self) -> float:
        return self.alpha if self.forget_loss == 'ME' else 1.0


@dataclass
class StepBatch:
    """
    Lotes de un paso de optimización.
    forget_idk / retain_idk reetiquetan las preguntas con plantillas de rechazo.
    """

    forget: Batch
    retain: Optional[Batch] = None
    forget_idk: Optional[Batch] = None
    retain_idk: Optional[Batch] = None


def relabel_with_templates(vocab: Vocab, questions: Sequence[str], templates: Sequence[str],
                           rng: random.Random) -> Batch:
    """Una plantilla nueva por pregunta, en el orden del lote."""
    return collate_pairs(vocab, [(q, idk_sample(templates, rng)) for q in questions])


def make_step_batch(config: LossConfig, vocab: Vocab, forget: Sequence[QAExample],
                    retain: Sequence[QAExample], templates: Sequence[str],
                    rng: random.Random) -> StepBatch:
    """
    Construye los lotes que necesita el método. El rng solo avanza si hay plantillas en juego.
    """
    if not forget:
        raise InputError('El lote de olvido está vacío.')
    if config.needs_templates and not templates:
        raise ConfigError(f'{config.method} requiere plantillas de rechazo.')
    if config.reg_loss != 'none' and not retain:
        raise InputError('El lote de retain está vacío.')

    step = StepBatch(forget=collate_pairs(vocab, [(e.question, e.answer) for e in forget]))
    if config.reg_loss != 'none':
        step.retain = collate_pairs(vocab, [(e.question, e.answer) for e in retain])
    if config.forget_loss in ('IDK', 'DPO'):
        step.forget_idk = relabel_with_templates(vocab, [e.question for e in forget], templates, rng)
    if config.reg_loss == 'AP':
        step.retain_idk = relabel_with_templates(vocab, [e.question for e in retain], templates, rng)
    return step


def _reference_logprob(ref_model, batch: Batch, region: str) -> torch.Tensor:
    with torch.no_grad():
        return batch_sequence_logprob(ref_model, batch, region)


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    if mask.sum() == 0:
        raise InputError('No hay posiciones seleccionadas.')
    return torch.where(mask, values, torch.zeros_like(values)).sum() / mask.sum()


def _plogp_diff(logp: torch.Tensor, logq: torch.Tensor) -> torch.Tensor:
    """Σ p·(log p − log q) por posición, con 0·log 0 = 0."""
    p = logp.exp()
    terms = torch.where(p > 0, p * (logp - logq), torch.zeros_like(p))
    return terms.sum(-1)


# Pérdidas de olvido

def ga_loss(model, batch: Batch, region: str = ANSWER) -> torch.Tensor:
    """
    Ascenso de gradiente: −mean NLL = mean log p(y|x).
    """
    return batch_sequence_logprob(model, batch, region).mean()


def npo_loss(model, ref_model, batch: Batch, beta: float, region: str = ANSWER) -> torch.Tensor:
    """
    −(2/β)·mean log σ(−β·(log p_θ − log p_ref)).
    :param ref_model: modelo de referencia, sin gradiente
    """
    ratio = batch_sequence_logprob(model, batch, region) - _reference_logprob(ref_model, batch, region)
    return -(2.0 / beta) * F.logsigmoid(-beta * ratio).mean()


def idk_loss(model, idk_batch: Batch, region: str = ANSWER) -> torch.Tensor:
    """NLL media de la plantilla de rechazo dada cada pregunta de olvido."""
    return gd_loss(model, idk_batch, region)


def dpo_loss(model, ref_model, batch: Batch, idk_batch: Batch, beta: float,
             region: str = ANSWER) -> torch.Tensor:
    """
    Preferencia con la plantilla como positivo (idk_batch) y la respuesta de olvido como negativo.
    Escala −(2/β) como NPO.
    """
    positive = (batch_sequence_logprob(model, idk_batch, region)
                - _reference_logprob(ref_model, idk_batch, region))
    negative = (batch_sequence_logprob(model, batch, region)
                - _reference_logprob(ref_model, batch, region))
    return -(2.0 / beta) * F.logsigmoid(beta * (positive - negative)).mean()


def me_loss(model, batch: Batch, question_masking: bool = False) -> torch.Tensor:
    """
    Media por posición de KL(P_t ‖ U_K) = log K − H(P_t).
    Sin máscara cubre toda la secuencia x' = x ∘ y.
    """
    region = ANSWER if question_masking else 'all'
    logprobs = batch_logprobs(model, batch)[:, :-1]
    log_k = math.log(logprobs.shape[-1])
    uniform = torch.full_like(logprobs, -log_k)
    return _masked_mean(_plogp_diff(logprobs, uniform), batch.region_mask(region))


# Regularizadores

def gd_loss(model, batch: Batch, region: str = ANSWER) -> torch.Tensor:
    """NLL media sobre el lote."""
    return -batch_sequence_logprob(model, batch, region).mean()


def kl_loss(model, ref_model, batch: Batch) -> torch.Tensor:
    """
    Media sobre las posiciones de respuesta de KL(P_θ ‖ P_ref).
    """
    logprobs = batch_logprobs(model, batch)[:, :-1]
    with torch.no_grad():
        ref_logprobs = batch_logprobs(ref_model, batch)[:, :-1]
    return _masked_mean(_plogp_diff(logprobs, ref_logprobs), batch.answer_mask)


def ap_loss(model, batch: Batch, idk_batch: Batch, beta: float) -> torch.Tensor:
    """
    Preservación de respuestas: −(1/β)·mean log σ(−β·(log p(y'|x) − log p(y|x))),
    y' una plantilla de rechazo e y la respuesta de retain.
    """
    answer = batch_sequence_logprob(model, batch, ANSWER)
    template = batch_sequence_logprob(model, idk_batch, ANSWER)
    return -(1.0 / beta) * F.logsigmoid(-beta * (template - answer)).mean()


def ap_weight(logp_answer, logp_template, beta: float):
    """
    Peso adaptativo W = 1 / (1 + (p(y|x) / p(y'|x))^β) del gradiente de AP.
    """
    diff = torch.as_tensor(logp_answer, dtype=torch.float64) - torch.as_tensor(logp_template, dtype=torch.float64)
    return torch.sigmoid(-beta * diff)


# Combinación

def forget_term(config: LossConfig, model, ref_model, step: StepBatch) -> torch.Tensor:
    region = config.forget_region
    name = config.forget_loss
    if name == 'GA':
        return ga_loss(model, step.forget, region)
    if name == 'NPO':
        return npo_loss(model, ref_model, step.forget, config.beta, region)
    if name == 'IDK':
        if step.forget_idk is None:
            raise ConfigError('IDK requiere plantillas de rechazo.')
        return idk_loss(model, step.forget_idk, region)
    if name == 'DPO':
        if step.forget_idk is None:
            raise ConfigError('DPO requiere plantillas de rechazo.')
        return dpo_loss(model, ref_model, step.forget, step.forget_idk, config.beta, region)
    return me_loss(model, step.forget, question_masking=config.masks_forget_question)


def reg_term(config: LossConfig, model, ref_model, step: StepBatch) -> Optional[torch.Tensor]:
    name = config.reg_loss
    if name == 'none':
        return None
    if step.retain is None:
        raise InputError(f'{config.method} requiere un lote de retain.')
    if name == 'GD':
        return gd_loss(model, step.retain)
    if name == 'KL':
        return kl_loss(model, ref_model, step.retain)
    if step.retain_idk is None:
        raise ConfigError('AP requiere plantillas de rechazo.')
    return ap_loss(model, step.retain, step.retain_idk, config.beta)


def combine_terms(config: LossConfig, model, ref_model, step: StepBatch) -> dict:
    """
    Términos ponderados del método, por nombre.
    :return: {'GA': tensor, 'GD': tensor} por ejemplo
    """
    if config.needs_reference and ref_model is None:
        raise ConfigError(f'{config.method} requiere un modelo de referencia.')
    terms = {config.forget_loss: config.forget_weight * forget_term(config, model, ref_model, step)}
    reg = reg_term(config, model, ref_model, step)
    if reg is not None:
        terms[config.reg_loss] = reg
    return terms


def combine(config: LossConfig, model, ref_model, step: StepBatch) -> torch.Tensor:
    """Suma ponderada de los términos del método."""
    return sum(combine_terms(config, model, ref_model, step).values())
