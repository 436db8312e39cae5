import copy
import io
import logging
import math
import random
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from unlearnlab.services.errors import InputError, MissingArtifactError, NumericError, TrainingError
from unlearnlab.services.schedule import Schedule, build_scheduler
from unlearnlab.services.storage import atomic_write

"""
Modelo de lenguaje causal pequeño (transformer y tabla bigrama) en doble precisión.
Expone log-probabilidades, gradientes exactos, decodificación voraz,
entrenamiento con AdamW y checkpoints.
"""
logger = logging.getLogger(__name__)

DTYPE = torch.float64

PAD, BOS, EOS, UNK = '<pad>', '<bos>', '<eos>', '<unk>'
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

QUESTION, ANSWER = 'question', 'answer'
REGIONS = (QUESTION, ANSWER, 'all')

PUNCTUATION = ',.?!;:'
_TOKEN_RE = re.compile(r"[^\s,.?!;:]+|[,.?!;:]")

CHECKPOINT_FORMAT = 'unlearnlab-checkpoint'
CHECKPOINT_VERSION = 1


def tokenize(text: str) -> List[str]:
    """
    Separa en minúsculas por espacios; la puntuación queda como token propio.
    :param text: texto libre
    :return: lista de tokens
    """
    return _TOKEN_RE.findall((text or '').lower())


def detokenize(tokens: Sequence[str]) -> str:
    out = ''
    for tok in tokens:
        if len(tok) == 1 and tok in PUNCTUATION:
            out += tok
        else:
            out += (' ' if out else '') + tok
    return out


@dataclass(frozen=True)
class Vocab:
    """
    Vocabulario ordenado. Los ids 0..3 son <pad>, <bos>, <eos>, <unk>.
    """

    tokens: Tuple[str, ...]
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if tokens[:len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise InputError('El vocabulario debe empezar por los tokens especiales.')
        if len(set(tokens)) != len(tokens):
            raise InputError('El vocabulario contiene tokens repetidos.')
        object.__setattr__(self, 'tokens', tokens)
        object.__setattr__(self, '_index', {tok: i for i, tok in enumerate(tokens)})

    @classmethod
    def build(cls, texts) -> 'Vocab':
        """
        Construye el vocabulario con todos los tokens de los textos, en orden alfabético.
        :param texts: iterable de strings
        :return: Vocab
        """
        words = set()
        for text in texts:
            words.update(tokenize(text))
        words.difference_update(SPECIAL_TOKENS)
        return cls(SPECIAL_TOKENS + tuple(sorted(words)))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def token_id(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def id_token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise InputError(f'Id {token_id} fuera del vocabulario (K={len(self.tokens)}).')
        return self.tokens[token_id]

    def encode(self, text: str) -> List[int]:
        return [self.token_id(tok) for tok in tokenize(text)]

    def decode(self, ids: Sequence[int]) -> str:
        """Texto de una secuencia de ids, omitiendo tokens especiales."""
        words = [self.id_token(i) for i in ids if i not in (PAD_ID, BOS_ID, EOS_ID)]
        return detokenize(words)


@dataclass(frozen=True)
class TokenSeq:
    """Secuencia de ids con el rol (pregunta o respuesta) de cada posición."""

    ids: Tuple[int, ...]
    roles: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, 'ids', tuple(int(i) for i in self.ids))
        object.__setattr__(self, 'roles', tuple(self.roles))
        if len(self.ids) != len(self.roles):
            raise InputError('ids y roles deben tener la misma longitud.')
        seen_answer = False
        for role in self.roles:
            if role not in (QUESTION, ANSWER):
                raise InputError(f'Rol desconocido: {role!r}.')
            if role == QUESTION and seen_answer:
                raise InputError('Las posiciones de pregunta deben preceder a las de respuesta.')
            seen_answer = seen_answer or role == ANSWER

    def __len__(self):
        return len(self.ids)

    @property
    def answer_ids(self) -> Tuple[int, ...]:
        return tuple(i for i, r in zip(self.ids, self.roles) if r == ANSWER)


def encode_pair(vocab: Vocab, question: str, answer: str) -> TokenSeq:
    """
    Codifica x' = x ∘ y como [BOS] pregunta respuesta [EOS].
    BOS pertenece a la pregunta; EOS a la respuesta.
    """
    q_ids = [BOS_ID] + vocab.encode(question)
    a_ids = vocab.encode(answer) + [EOS_ID]
    return TokenSeq(tuple(q_ids + a_ids), (QUESTION,) * len(q_ids) + (ANSWER,) * len(a_ids))


def encode_prompt(vocab: Vocab, question: str) -> TokenSeq:
    q_ids = [BOS_ID] + vocab.encode(question)
    return TokenSeq(tuple(q_ids), (QUESTION,) * len(q_ids))


def _check_ids(ids, vocab_size: int):
    for i in ids:
        if not 0 <= i < vocab_size:
            raise InputError(f'Id de token {i} fuera de rango (K={vocab_size}).')


@dataclass
class Batch:
    """
    Lote con relleno a la derecha.
    Las máscaras están desplazadas una posición: la columna t marca el objetivo ids[:, t+1].
    """

    ids: torch.Tensor
    lengths: torch.Tensor
    question_mask: torch.Tensor
    answer_mask: torch.Tensor

    def __len__(self):
        return self.ids.shape[0]

    def region_mask(self, region: str) -> torch.Tensor:
        if region == QUESTION:
            return self.question_mask
        if region == ANSWER:
            return self.answer_mask
        if region == 'all':
            return self.question_mask | self.answer_mask
        raise InputError(f'Región desconocida: {region!r}.')


def collate(seqs: Sequence[TokenSeq]) -> Batch:
    """
    Agrupa secuencias en un Batch.
    :param seqs: secuencias no vacías
    :return: Batch
    """
    if not seqs:
        raise InputError('No se puede agrupar un lote vacío.')
    width = max(len(s) for s in seqs)
    if width == 0:
        raise InputError('Secuencias vacías.')

    ids = torch.full((len(seqs), width), PAD_ID, dtype=torch.long)
    question_mask = torch.zeros((len(seqs), max(width - 1, 0)), dtype=torch.bool)
    answer_mask = torch.zeros_like(question_mask)
    for row, seq in enumerate(seqs):
        n = len(seq)
        ids[row, :n] = torch.tensor(seq.ids, dtype=torch.long)
        # El objetivo de la columna t es el token t+1
        for t in range(n - 1):
            if seq.roles[t + 1] == QUESTION:
                question_mask[row, t] = True
            else:
                answer_mask[row, t] = True
    lengths = torch.tensor([len(s) for s in seqs], dtype=torch.long)
    return Batch(ids=ids, lengths=lengths, question_mask=question_mask, answer_mask=answer_mask)


def collate_pairs(vocab: Vocab, pairs: Sequence[Tuple[str, str]]) -> Batch:
    return collate([encode_pair(vocab, q, a) for q, a in pairs])


# Modelos

@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    context: int = 64
    tied: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < len(SPECIAL_TOKENS):
            raise InputError('vocab_size debe ser al menos 4.')
        if self.d_model % self.n_heads:
            raise InputError('d_model debe ser múltiplo de n_heads.')
        if self.context < 2 or self.n_layers < 1:
            raise InputError('context >= 2 y n_layers >= 1.')


class CausalSelfAttention(nn.Module):

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_heads = config.n_heads
        self.qkv = nn.Linear(config.d_model, 3 * config.d_model)
        self.proj = nn.Linear(config.d_model, config.d_model)
        mask = torch.tril(torch.ones(config.context, config.context, dtype=torch.bool))
        self.register_buffer('causal_mask', mask, persistent=False)

    def forward(self, x):
        batch, steps, width = x.shape
        head_dim = width // self.n_heads
        q, k, v = self.qkv(x).split(width, dim=-1)
        q = q.view(batch, steps, self.n_heads, head_dim).transpose(1, 2)
        k = k.view(batch, steps, self.n_heads, head_dim).transpose(1, 2)
        v = v.view(batch, steps, self.n_heads, head_dim).transpose(1, 2)

        scores = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
        scores = scores.masked_fill(~self.causal_mask[:steps, :steps], float('-inf'))
        weights = F.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).contiguous().view(batch, steps, width)
        return self.proj(out)


class Block(nn.Module):
    """Bloque pre-LN: atención causal + MLP 4x con GELU exacta."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(config.d_model)
        self.attn = CausalSelfAttention(config)
        self.ln2 = nn.LayerNorm(config.d_model)
        self.mlp = nn.Sequential(
            nn.Linear(config.d_model, 4 * config.d_model),
            nn.GELU(),
            nn.Linear(4 * config.d_model, config.d_model),
        )

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class CausalLM(nn.Module):
    """
    Transformer causal. La inicialización depende solo de config.seed
    y no altera el estado global del generador de torch.
    """

    kind = 'causal-lm'

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
            self.pos_emb = nn.Embedding(config.context, config.d_model)
            self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layers))
            self.ln_f = nn.LayerNorm(config.d_model)
            self.lm_head = nn.Linear(config.d_model, config.vocab_size, bias=False)
            self.apply(self._init_weights)
            if config.tied:
                self.lm_head.weight = self.tok_emb.weight
        self.to(DTYPE)

    @staticmethod
    def _init_weights(module):
        if isinstance(module, (nn.Linear, nn.Embedding)):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
        if isinstance(module, nn.Linear) and module.bias is not None:
            nn.init.zeros_(module.bias)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    @property
    def context(self) -> int:
        return self.config.context

    def spec(self) -> dict:
        return {'kind': self.kind, 'config': asdict(self.config)}

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        steps = ids.shape[1]
        if steps > self.config.context:
            raise InputError(f'Secuencia de {steps} tokens excede el contexto {self.config.context}.')
        positions = torch.arange(steps, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.ln_f(x))


class TabularLM(nn.Module):
    """
    Modelo bigrama: tabla K×K de logits, fila = token actual.
    Sirve como oráculo analítico para pérdidas y gradientes.
    """

    kind = 'tabular'
    context = None

    def __init__(self, vocab_size: int, seed: int = 0, scale: float = 1.0):
        super().__init__()
        if vocab_size < 2:
            raise InputError('vocab_size debe ser al menos 2.')
        generator = torch.Generator().manual_seed(seed)
        table = torch.randn(vocab_size, vocab_size, generator=generator, dtype=DTYPE) * scale
        self.logits = nn.Parameter(table)
        self.seed = seed

    @classmethod
    def from_probabilities(cls, table) -> 'TabularLM':
        """
        :param table: matriz K×K de probabilidades (filas suman 1)
        :return: TabularLM con logits = log(table)
        """
        table = torch.as_tensor(table, dtype=DTYPE)
        if table.dim() != 2 or table.shape[0] != table.shape[1]:
            raise InputError('La tabla debe ser cuadrada.')
        if (table < 0).any() or not torch.allclose(table.sum(-1), torch.ones(table.shape[0], dtype=DTYPE), atol=1e-12):
            raise InputError('Cada fila debe ser una distribución válida.')
        model = cls(table.shape[0])
        with torch.no_grad():
            model.logits.copy_(torch.log(table))
        return model

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[0]

    def spec(self) -> dict:
        return {'kind': self.kind, 'config': {'vocab_size': self.vocab_size, 'seed': self.seed}}

    def probabilities(self) -> torch.Tensor:
        return F.softmax(self.logits, dim=-1)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.logits[ids]


def build_model(spec: Mapping) -> nn.Module:
    """Instancia un modelo a partir de su descripción (kind + config)."""
    kind = spec.get('kind')
    if kind == CausalLM.kind:
        return CausalLM(ModelConfig(**spec['config']))
    if kind == TabularLM.kind:
        return TabularLM(**spec['config'])
    raise InputError(f'Tipo de modelo desconocido: {kind!r}.')


# Log-probabilidades

def batch_logprobs(model: nn.Module, batch: Batch) -> torch.Tensor:
    """
    :return: tensor (B, T, K) de log-distribuciones del siguiente token
    """
    _check_ids(batch.ids.flatten().tolist(), model.vocab_size)
    return F.log_softmax(model(batch.ids), dim=-1)


def forward_logprobs(model: nn.Module, seq: TokenSeq) -> torch.Tensor:
    """
    Log-distribución P_t sobre los K tokens en cada posición de la secuencia.
    :param model: CausalLM o TabularLM
    :param seq: secuencia no vacía
    :return: tensor (T, K)
    """
    if len(seq) == 0:
        raise InputError('La secuencia está vacía.')
    _check_ids(seq.ids, model.vocab_size)
    ids = torch.tensor([seq.ids], dtype=torch.long)
    return F.log_softmax(model(ids)[0], dim=-1)


def target_logprobs(model: nn.Module, batch: Batch, logprobs: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    Log-probabilidad de cada token objetivo.
    :return: tensor (B, T-1); la columna t corresponde a ids[:, t+1]
    """
    if logprobs is None:
        logprobs = batch_logprobs(model, batch)
    targets = batch.ids[:, 1:].unsqueeze(-1)
    return logprobs[:, :-1].gather(-1, targets).squeeze(-1)


def batch_sequence_logprob(model: nn.Module, batch: Batch, region: str = ANSWER) -> torch.Tensor:
    """
    Suma de log-probabilidades de las posiciones de la región, por ejemplo.
    :return: tensor (B,)
    """
    mask = batch.region_mask(region)
    if mask.shape[1] == 0 or (mask.sum(-1) == 0).any():
        raise InputError(f'La región {region!r} no selecciona ninguna posición.')
    token_lp = target_logprobs(model, batch)
    return torch.where(mask, token_lp, torch.zeros_like(token_lp)).sum(-1)


def sequence_logprob(model: nn.Module, seq: TokenSeq, region: str = ANSWER) -> torch.Tensor:
    """
    log p de las posiciones seleccionadas: question, answer o all.
    :return: escalar <= 0
    """
    if len(seq) == 0:
        raise InputError('La secuencia está vacía.')
    _check_ids(seq.ids, model.vocab_size)
    return batch_sequence_logprob(model, collate([seq]), region)[0]


# Gradientes

def _terms(output) -> dict:
    if isinstance(output, Mapping):
        return dict(output)
    return {'loss': output}


def _total(terms: dict):
    total = 0.0
    for value in terms.values():
        total = total + value
    return total


def grad(model: nn.Module, loss_fn: Callable[[nn.Module], object]) -> dict:
    """
    Gradiente exacto de una pérdida respecto a los parámetros del modelo.
    :param model: modelo
    :param loss_fn: función model -> tensor escalar o dict {término: tensor}
    :return: dict nombre_parámetro -> tensor con la forma del parámetro
    """
    named = list(model.named_parameters())
    terms = _terms(loss_fn(model))
    for name, value in terms.items():
        if not math.isfinite(float(value)):
            raise NumericError(f'El término {name!r} no es finito.', term=name)

    total = _total(terms)
    if not torch.is_tensor(total) or not total.requires_grad:
        return {name: torch.zeros_like(p) for name, p in named}

    grads = torch.autograd.grad(total, [p for _, p in named], allow_unused=True)
    return {
        name: (g if g is not None else torch.zeros_like(p))
        for (name, p), g in zip(named, grads)
    }


def sample_coordinates(model: nn.Module, n: int, seed: int = 0) -> List[Tuple[str, int]]:
    """
    Elige n coordenadas (parámetro, índice plano) uniformemente entre todas.
    """
    named = list(model.named_parameters())
    sizes = [p.numel() for _, p in named]
    total = sum(sizes)
    rng = random.Random(seed)
    coords = []
    for flat in rng.sample(range(total), min(n, total)):
        for (name, _), size in zip(named, sizes):
            if flat < size:
                coords.append((name, flat))
                break
            flat -= size
    return coords


def numeric_grad(model: nn.Module, loss_fn, coords: Sequence[Tuple[str, int]], h: float = 1e-5) -> List[float]:
    """
    Diferencias finitas centrales en las coordenadas indicadas.
    El modelo queda intacto al terminar.
    """
    params = dict(model.named_parameters())
    values = []
    with torch.no_grad():
        for name, index in coords:
            flat = params[name].data.view(-1)
            original = flat[index].item()
            flat[index] = original + h
            plus = float(_total(_terms(loss_fn(model))))
            flat[index] = original - h
            minus = float(_total(_terms(loss_fn(model))))
            flat[index] = original
            values.append((plus - minus) / (2 * h))
    return values


# Decodificación

@torch.no_grad()
def greedy_decode_batch(model: nn.Module, prompts: Sequence[TokenSeq], max_len: int) -> List[TokenSeq]:
    """
    Decodificación voraz de varios prompts a la vez.
    Cada token es el argmax de P_t (empates: id más bajo); para en EOS o max_len.
    :return: una TokenSeq (rol answer, sin EOS) por prompt
    """
    if max_len < 1:
        raise InputError('max_len debe ser >= 1.')
    for prompt in prompts:
        if len(prompt) == 0:
            raise InputError('El prompt está vacío.')
        _check_ids(prompt.ids, model.vocab_size)

    running = [list(p.ids) for p in prompts]
    outputs = [[] for _ in prompts]
    active = list(range(len(prompts)))
    context = getattr(model, 'context', None)

    for _ in range(max_len):
        if not active:
            break
        windows = [running[i][-context:] if context else running[i] for i in active]
        width = max(len(w) for w in windows)
        ids = torch.full((len(windows), width), PAD_ID, dtype=torch.long)
        for row, window in enumerate(windows):
            ids[row, :len(window)] = torch.tensor(window, dtype=torch.long)

        logits = model(ids)
        last = torch.tensor([len(w) - 1 for w in windows])
        next_ids = logits[torch.arange(len(windows)), last].argmax(dim=-1).tolist()

        still_active = []
        for i, token in zip(active, next_ids):
            if token == EOS_ID:
                continue
            outputs[i].append(token)
            running[i].append(token)
            if len(outputs[i]) < max_len:
                still_active.append(i)
        active = still_active

    return [TokenSeq(tuple(out), (ANSWER,) * len(out)) for out in outputs]


def greedy_decode(model: nn.Module, prompt: TokenSeq, max_len: int) -> TokenSeq:
    return greedy_decode_batch(model, [prompt], max_len)[0]


# Entrenamiento

@dataclass(frozen=True)
class OptimizerConfig:
    """AdamW con pesos desacoplados; lr de escritorio 3e-3."""

    lr: float = 3e-3
    batch_size: int = 32
    weight_decay: float = 0.01
    epochs: int = 1
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0:
            raise InputError('Configuración de optimizador inválida.')
        object.__setattr__(self, 'betas', tuple(self.betas))


@dataclass
class FineTuneResult:
    model: nn.Module
    epoch_nll: List[float]


def make_optimizer(model: nn.Module, config: OptimizerConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        model.parameters(),
        lr=config.lr,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )


def fine_tune(model: nn.Module, dataset: Sequence[TokenSeq], config: OptimizerConfig) -> FineTuneResult:
    """
    Minimiza la NLL media de las respuestas. No modifica el modelo recibido.
    :param model: modelo inicial
    :param dataset: secuencias pregunta+respuesta
    :param config: OptimizerConfig
    :return: FineTuneResult con el modelo entrenado y la NLL media por época
    """
    if not dataset:
        raise InputError('El conjunto de entrenamiento está vacío.')

    model = copy.deepcopy(model)
    model.train()
    optimizer = make_optimizer(model, config)
    steps_per_epoch = math.ceil(len(dataset) / config.batch_size)
    schedule = Schedule.for_epochs(config.lr, steps_per_epoch, config.epochs)
    scheduler = build_scheduler(optimizer, schedule)
    rng = random.Random(config.seed)
    order = list(range(len(dataset)))

    epoch_nll = []
    step = 0
    for epoch in range(config.epochs):
        rng.shuffle(order)
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = collate([dataset[i] for i in order[start:start + config.batch_size]])
            loss = -batch_sequence_logprob(model, batch, ANSWER).mean()
            if not torch.isfinite(loss):
                raise TrainingError(f'NLL no finita en el paso {step}.', step=step, term='nll')

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            total += loss.item() * len(batch)
            count += len(batch)

        epoch_nll.append(total / count)
        logger.info('época %d/%d nll=%.6f', epoch + 1, config.epochs, epoch_nll[-1])

    model.eval()
    return FineTuneResult(model=model, epoch_nll=epoch_nll)


# Checkpoints

def checkpoint_payload(model: nn.Module, config_hash: Optional[str] = None, extra: Optional[dict] = None) -> dict:
    spec = model.spec()
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'kind': spec['kind'],
        'model_config': spec['config'],
        'seed': spec['config'].get('seed', 0),
        'config_hash': config_hash,
        'state': {k: v.detach().clone() for k, v in model.state_dict().items()},
    }
    if extra:
        payload['extra'] = extra
    return payload


def model_from_payload(payload: Mapping) -> nn.Module:
    if payload.get('format') != CHECKPOINT_FORMAT:
        raise InputError('El archivo no es un checkpoint de unlearnlab.')
    model = build_model({'kind': payload['kind'], 'config': payload['model_config']})
    model.load_state_dict(payload['state'])
    model.eval()
    return model


def save_checkpoint(model: nn.Module, path, config_hash: Optional[str] = None, extra: Optional[dict] = None) -> Path:
    """
    Guarda pesos y descripción del modelo con torch.save, de forma atómica.
    :return: ruta escrita
    """
    buffer = io.BytesIO()
    torch.save(checkpoint_payload(model, config_hash, extra), buffer)
    return atomic_write(path, buffer.getvalue())


def load_checkpoint(path) -> Tuple[nn.Module, dict]:
    """
    :param path: ruta del checkpoint
    :return: (modelo, metadatos sin el estado)
    """
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f'No existe el checkpoint {path}.')
    payload = torch.load(path, map_location='cpu', weights_only=True)
    model = model_from_payload(payload)
    meta = {k: v for k, v in payload.items() if k != 'state'}
    return model, meta
