import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Optional

import tomli
from django.conf import settings

from unlearnlab.services.errors import ConfigError
from unlearnlab.services.losses import LossConfig
from unlearnlab.services.seqmodel import ModelConfig, OptimizerConfig
from unlearnlab.services.storage import dumps_canonical

"""
Configuración de experimentos: lectura TOML/JSON, overrides, hash por alcance
y rutas de artefactos.
"""
logger = logging.getLogger(__name__)

SECTIONS = ('corpus', 'model', 'pretrain', 'finetune', 'unlearn', 'continual', 'eval', 'backends')
HASH_LENGTH = 12


@dataclass(frozen=True)
class CorpusSection:
    n_authors: int
    n_qa_per_author: int
    n_world: int
    forget_fraction: float


@dataclass(frozen=True)
class ModelSection:
    d_model: int
    n_layers: int
    n_heads: int
    context: int
    tied: bool


@dataclass(frozen=True)
class TrainSection:
    lr: float
    epochs: int
    batch_size: int
    weight_decay: float


@dataclass(frozen=True)
class FinetuneSection(TrainSection):
    replay_world: bool


@dataclass(frozen=True)
class UnlearnSection:
    method: str
    alpha: float
    beta: float
    question_masking: Optional[bool]
    epochs: int
    batch_size: int
    lr: float
    weight_decay: float
    precheck: bool
    precheck_threshold: float


@dataclass(frozen=True)
class ContinualSection:
    fraction: float
    n_subtasks: int
    supplement_floor: Optional[int]
    reference_policy: str
    alpha: float
    epochs_per_subtask: int


@dataclass(frozen=True)
class EvalSection:
    max_len: int


@dataclass(frozen=True)
class BackendsSection:
    base_url: Optional[str]
    timeout: float
    retries: int
    backoff: float


_SECTION_TYPES = {
    'corpus': CorpusSection,
    'model': ModelSection,
    'pretrain': TrainSection,
    'finetune': FinetuneSection,
    'unlearn': UnlearnSection,
    'continual': ContinualSection,
    'eval': EvalSection,
    'backends': BackendsSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: str
    corpus: CorpusSection
    model: ModelSection
    pretrain: TrainSection
    finetune: FinetuneSection
    unlearn: UnlearnSection
    continual: ContinualSection
    eval: EvalSection
    backends: BackendsSection

    @classmethod
    def from_dict(cls, data: Mapping) -> 'ExperimentConfig':
        """
        Valida con ExperimentConfigSerializer y completa valores por defecto.
        :raises ConfigError: claves desconocidas o valores inválidos
        """
        from unlearnlab.serializers import ExperimentConfigSerializer

        if not isinstance(data, Mapping):
            raise ConfigError('La configuración debe ser un objeto.')
        raw = dict(data)
        for section in SECTIONS:
            if raw.get(section) is None:
                raw[section] = {}

        serializer = ExperimentConfigSerializer(data=raw)
        if not serializer.is_valid():
            raise ConfigError(f'Configuración inválida: {json.dumps(serializer.errors, ensure_ascii=False)}')
        values = serializer.validated_data

        output_dir = values['output_dir'] or str(getattr(settings, 'UNLEARNLAB_OUTPUT_DIR', 'out'))
        sections = {name: _SECTION_TYPES[name](**dict(values[name])) for name in SECTIONS}
        return cls(seed=values['seed'], output_dir=output_dir, **sections)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, seed=self.seed, **asdict(self.model))

    def train_optimizer(self, section: TrainSection) -> OptimizerConfig:
        return OptimizerConfig(
            lr=section.lr,
            batch_size=section.batch_size,
            weight_decay=section.weight_decay,
            epochs=section.epochs,
            seed=self.seed,
        )

    def unlearn_optimizer(self, epochs: Optional[int] = None) -> OptimizerConfig:
        return OptimizerConfig(
            lr=self.unlearn.lr,
            batch_size=self.unlearn.batch_size,
            weight_decay=self.unlearn.weight_decay,
            epochs=self.unlearn.epochs if epochs is None else epochs,
            seed=self.seed,
        )

    def loss_config(self, continual: bool = False) -> LossConfig:
        """LossConfig del método; en continuo usa el alpha de [continual]."""
        return LossConfig.from_method(
            self.unlearn.method,
            alpha=self.continual.alpha if continual else self.unlearn.alpha,
            beta=self.unlearn.beta,
            question_masking=self.unlearn.question_masking,
        )

    @property
    def paths(self) -> 'ArtifactPaths':
        return ArtifactPaths(Path(self.output_dir))


@dataclass(frozen=True)
class ArtifactPaths:
    root: Path

    @property
    def corpus_dir(self) -> Path:
        return self.root / 'corpus'

    @property
    def checkpoints_dir(self) -> Path:
        return self.root / 'checkpoints'

    def checkpoint(self, name: str) -> Path:
        return self.checkpoints_dir / f'{name}.pt'

    def run_dir(self, run_hash: str) -> Path:
        return self.root / 'runs' / run_hash

    @property
    def results_log(self) -> Path:
        return self.root / 'results.jsonl'

    @property
    def plots_dir(self) -> Path:
        return self.root / 'plots'

    @property
    def tables_dir(self) -> Path:
        return self.root / 'tables'

    @property
    def judge_dir(self) -> Path:
        return self.root / 'judge'


def parse_override(text: str):
    """
    'section.key=value' -> (['section', 'key'], value); el valor se lee como JSON si se puede.
    """
    key, sep, raw = (text or '').partition('=')
    if not sep or not key.strip():
        raise ConfigError(f'Override inválido: {text!r} (se espera clave=valor).')
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip().split('.'), value


def apply_overrides(data: dict, overrides: Optional[Mapping] = None) -> dict:
    """
    :param overrides: dict de clave con puntos -> valor (None se ignora)
    """
    data = json.loads(json.dumps(data))
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        parts = dotted.split('.') if isinstance(dotted, str) else list(dotted)
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f'{dotted} no apunta a una sección.')
        node[parts[-1]] = value
    return data


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f'No existe el archivo de configuración {path}.')
    try:
        if path.suffix == '.json':
            return json.loads(path.read_text(encoding='utf-8'))
        with open(path, 'rb') as fh:
            return tomli.load(fh)
    except (ValueError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f'{path}: {exc}') from exc


def load_config(path=None, overrides: Optional[Mapping] = None) -> ExperimentConfig:
    """
    Lee la configuración (TOML o JSON) y aplica los overrides.
    :param path: ruta del archivo o None para los valores por defecto
    :param overrides: dict 'seccion.clave' -> valor
    :return: ExperimentConfig
    """
    data = read_config_file(path) if path else {}
    return ExperimentConfig.from_dict(apply_overrides(data, overrides))


def _scope_payload(config: ExperimentConfig, scope: str, kind: Optional[str]) -> dict:
    data = config.to_dict()
    # La fracción de olvido solo afecta a las ejecuciones, no al corpus ni a los modelos
    sections = {k: v for k, v in data['corpus'].items() if k != 'forget_fraction'}
    corpus = {'seed': data['seed'], 'corpus': sections}
    if scope == 'corpus':
        return corpus
    pretrain = dict(corpus, model=data['model'], pretrain=data['pretrain'])
    if scope == 'pretrain':
        return pretrain
    target = dict(pretrain, finetune=data['finetune'])
    if scope == 'target':
        return target
    if scope == 'surrogate':
        return dict(target, retain_only=True, forget_fraction=data['corpus']['forget_fraction'])
    if scope == 'run':
        payload = dict(target, unlearn=data['unlearn'], eval=data['eval'], kind=kind or 'unlearn',
                       forget_fraction=data['corpus']['forget_fraction'])
        if kind == 'continual':
            payload['continual'] = data['continual']
        return payload
    raise ConfigError(f'Alcance de hash desconocido: {scope!r}.')


def config_hash(config: ExperimentConfig, scope: str = 'run', kind: Optional[str] = None) -> str:
    """
    SHA-256 (12 hex) del JSON canónico de las secciones que afectan a un artefacto.
    output_dir y backends nunca entran en el hash.
    """
    payload = _scope_payload(config, scope, kind)
    return hashlib.sha256(dumps_canonical(payload).encode('utf-8')).hexdigest()[:HASH_LENGTH]
