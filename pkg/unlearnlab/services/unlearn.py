import copy
import io
import json
import logging
import math
import random
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import torch
from django.conf import settings

from unlearnlab.services.corpus import DatasetBundle, QAExample, continual_slices
from unlearnlab.services.errors import InputError, MissingArtifactError, PlanError, TrainingError
from unlearnlab.services.losses import LossConfig, combine_terms, make_step_batch
from unlearnlab.services.metrics import MetricReport, rouge_l_recall
from unlearnlab.services.schedule import Schedule, build_scheduler
from unlearnlab.services.seqmodel import (
    OptimizerConfig,
    Vocab,
    checkpoint_payload,
    encode_prompt,
    greedy_decode_batch,
    make_optimizer,
    model_from_payload,
    save_checkpoint,
)
from unlearnlab.services.storage import atomic_write, read_jsonl

"""
Driver de desaprendizaje: ejecuciones de una tarea con evaluación por época
y el arnés continuo con suplemento del retain y políticas de referencia.
"""
logger = logging.getLogger(__name__)

RUN_STATE_FORMAT = 'unlearnlab-run-state'
REFERENCE_POLICIES = ('previous', 'fixed-initial')

EvalHook = Callable[..., MetricReport]


@dataclass
class RunRecord:
    method: str
    epoch: int
    report: MetricReport
    wall_time: float
    seed: int
    config_hash: str
    subtask: Optional[int] = None
    retain_size: Optional[int] = None
    kind: str = 'unlearn'

    @property
    def key(self):
        return (self.config_hash, self.kind, self.method, self.subtask, self.epoch)

    def to_dict(self) -> dict:
        return {
            'method': self.method,
            'epoch': self.epoch,
            'subtask': self.subtask,
            'retain_size': self.retain_size,
            'kind': self.kind,
            'seed': self.seed,
            'config_hash': self.config_hash,
            'wall_time': self.wall_time,
            'report': self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'RunRecord':
        return cls(
            method=data['method'],
            epoch=data['epoch'],
            report=MetricReport.from_dict(data['report']),
            wall_time=data.get('wall_time', 0.0),
            seed=data['seed'],
            config_hash=data['config_hash'],
            subtask=data.get('subtask'),
            retain_size=data.get('retain_size'),
            kind=data.get('kind', 'unlearn'),
        )


@dataclass
class RunResult:
    records: List[RunRecord]
    model: torch.nn.Module


@dataclass(frozen=True)
class ContinualPlan:
    """
    Porciones de autores a olvidar en orden; disjuntas y sin cubrir a todos los autores.
    """

    slices: tuple
    supplement_floor: Optional[int] = None
    reference_policy: str = 'previous'

    def __post_init__(self):
        object.__setattr__(self, 'slices', tuple(tuple(s) for s in self.slices))
        if not self.slices or any(not s for s in self.slices):
            raise PlanError('El plan necesita porciones no vacías.')
        seen = set()
        for part in self.slices:
            if seen & set(part):
                raise PlanError('Las porciones del plan se solapan.')
            seen.update(part)
        if self.reference_policy not in REFERENCE_POLICIES:
            raise PlanError(f'Política de referencia desconocida: {self.reference_policy!r}.')
        if self.supplement_floor is not None and self.supplement_floor < 1:
            raise PlanError('supplement_floor debe ser >= 1.')

    @property
    def n_subtasks(self) -> int:
        return len(self.slices)

    @classmethod
    def build(cls, bundle: DatasetBundle, fraction: float, n_subtasks: int, **kwargs) -> 'ContinualPlan':
        plan = cls(slices=continual_slices(bundle, fraction, n_subtasks), **kwargs)
        plan.validate_for(bundle)
        return plan

    def validate_for(self, bundle: DatasetBundle):
        names = set(bundle.author_names)
        forgotten = {a for part in self.slices for a in part}
        if forgotten - names:
            raise PlanError(f'Autores desconocidos en el plan: {sorted(forgotten - names)}.')
        if not names - forgotten:
            raise PlanError('Al menos un autor debe quedar sin olvidar.')
        if self.supplement_floor is not None:
            remaining = sum(e.author not in forgotten for e in bundle.fictitious)
            missing = self.supplement_floor - remaining
            if missing > len(bundle.supplement):
                raise PlanError(
                    f'La última subtarea necesita {missing} ejemplos de suplemento '
                    f'y el pool tiene {len(bundle.supplement)}.'
                )


def _wall_time(started: float) -> float:
    if not getattr(settings, 'UNLEARNLAB_RECORD_WALL_TIME', True):
        return 0.0
    return round(time.perf_counter() - started, 3)


def memorization_precheck(model, vocab: Vocab, examples: Sequence[QAExample], threshold: float = 0.95,
                          max_len: int = 32) -> float:
    """
    Verifica que el modelo objetivo memorice el retain (ROUGE-L medio >= threshold).
    :return: ROUGE-L medio
    """
    prompts = [encode_prompt(vocab, e.question) for e in examples]
    generations = [vocab.decode(seq.ids) for seq in greedy_decode_batch(model, prompts, max_len)]
    score = sum(rouge_l_recall(g, e.answer) for g, e in zip(generations, examples)) / len(examples)
    if score < threshold:
        raise InputError(
            f'El modelo objetivo no memoriza el retain: ROUGE-L {score:.4f} < {threshold}.'
        )
    return score


def _frozen_copy(model):
    ref = copy.deepcopy(model)
    for param in ref.parameters():
        param.requires_grad_(False)
    ref.eval()
    return ref


def _save_run_state(path: Path, epoch: int, model, ref, optimizer, scheduler, rng, records):
    state = {
        'format': RUN_STATE_FORMAT,
        'epoch': epoch,
        'model': checkpoint_payload(model),
        'reference': checkpoint_payload(ref),
        'optimizer': optimizer.state_dict(),
        'scheduler': scheduler.state_dict(),
        'rng': [rng.getstate()[0], list(rng.getstate()[1]), rng.getstate()[2]],
        'records': [r.to_dict() for r in records],
    }
    buffer = io.BytesIO()
    torch.save(state, buffer)
    atomic_write(path, buffer.getvalue())


def load_run_state(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f'No existe el estado de ejecución {path}.')
    state = torch.load(path, map_location='cpu', weights_only=True)
    if state.get('format') != RUN_STATE_FORMAT:
        raise InputError(f'{path} no es un estado de ejecución.')
    return state


def latest_run_state(run_dir) -> Optional[Path]:
    """Último epoch_<k>.pt del directorio de la ejecución, o None."""
    run_dir = Path(run_dir)
    states = sorted(run_dir.glob('epoch_*.pt'), key=lambda p: int(p.stem.split('_')[1]))
    return states[-1] if states else None


def run_unlearning(target, config: LossConfig, bundle: DatasetBundle, optim: OptimizerConfig,
                   eval_hook: EvalHook, *, forget: Optional[Sequence[QAExample]] = None,
                   retain: Optional[Sequence[QAExample]] = None, vocab: Optional[Vocab] = None,
                   reference=None, config_hash: str = '', run_dir=None, resume_from=None,
                   eval_every_epoch: bool = True, subtask: Optional[int] = None, kind: str = 'unlearn',
                   on_record: Optional[Callable[[RunRecord], None]] = None) -> RunResult:
    """
    Ejecuta el desaprendizaje de una tarea.
    :param target: modelo objetivo (no se modifica)
    :param config: LossConfig del método
    :param bundle: corpus con partición (o forget/retain explícitos)
    :param optim: OptimizerConfig (lr pico, lote, épocas, semilla)
    :param eval_hook: función (model, forget, retain) -> MetricReport
    :param reference: modelo de referencia; por defecto una copia congelada de target
    :param run_dir: directorio donde guardar epoch_<k>.pt y final.pt
    :param resume_from: estado epoch_<k>.pt desde el que continuar
    :return: RunResult con un RunRecord por época evaluada y el modelo final
    """
    forget = list(bundle.forget if forget is None else forget)
    retain = list(bundle.retain if retain is None else retain)
    if not forget:
        raise InputError('El conjunto de olvido está vacío.')
    if config.reg_loss != 'none' and not retain:
        raise PlanError('El conjunto de retain está vacío.')
    vocab = vocab or bundle.vocab()

    model = copy.deepcopy(target)
    model.train()
    ref = _frozen_copy(reference if reference is not None else target)
    optimizer = make_optimizer(model, optim)
    steps_per_epoch = math.ceil(len(forget) / optim.batch_size)
    schedule = Schedule.for_epochs(optim.lr, steps_per_epoch, optim.epochs)
    scheduler = build_scheduler(optimizer, schedule)
    rng = random.Random(optim.seed)
    records: List[RunRecord] = []
    start_epoch = 0
    started = time.perf_counter()

    if resume_from is not None:
        state = load_run_state(resume_from)
        model.load_state_dict(state['model']['state'])
        ref = _frozen_copy(model_from_payload(state['reference']))
        optimizer.load_state_dict(state['optimizer'])
        scheduler.load_state_dict(state['scheduler'])
        version, internal, gauss = state['rng']
        rng.setstate((version, tuple(internal), gauss))
        records = [RunRecord.from_dict(r) for r in state['records']]
        start_epoch = state['epoch']
        logger.info('reanudando %s desde la época %d', config.method, start_epoch)

    def record(epoch: int, evaluated_model):
        evaluated_model.eval()
        entry = RunRecord(
            method=config.method,
            epoch=epoch,
            report=eval_hook(evaluated_model, forget, retain),
            wall_time=_wall_time(started),
            seed=optim.seed,
            config_hash=config_hash,
            subtask=subtask,
            retain_size=len(retain),
            kind=kind,
        )
        records.append(entry)
        if on_record is not None:
            on_record(entry)
        evaluated_model.train()
        logger.info('%s época %d: MU=%.4f FE=%.4f', config.method, epoch, entry.report.MU, entry.report.FE)

    if optim.epochs == 0:
        record(0, model)

    step = start_epoch * steps_per_epoch
    for epoch in range(start_epoch, optim.epochs):
        order = list(range(len(forget)))
        rng.shuffle(order)
        epoch_terms = {}
        for start in range(0, len(order), optim.batch_size):
            forget_batch = [forget[i] for i in order[start:start + optim.batch_size]]
            retain_batch = []
            if config.reg_loss != 'none':
                retain_batch = rng.sample(retain, min(optim.batch_size, len(retain)))
            batch = make_step_batch(config, vocab, forget_batch, retain_batch, bundle.idk, rng)

            terms = combine_terms(config, model, ref, batch)
            for name, value in terms.items():
                if not torch.isfinite(value):
                    err = TrainingError(f'Término {name} no finito en el paso {step}.', step=step, term=name)
                    err.records = records
                    raise err
                epoch_terms[name] = epoch_terms.get(name, 0.0) + value.item()

            loss = sum(terms.values())
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1

        logger.info('%s época %d/%d términos=%s', config.method, epoch + 1, optim.epochs,
                    {k: round(v / steps_per_epoch, 6) for k, v in epoch_terms.items()})
        if eval_every_epoch or epoch + 1 == optim.epochs:
            record(epoch + 1, model)
        if run_dir is not None:
            _save_run_state(Path(run_dir) / f'epoch_{epoch + 1}.pt', epoch + 1, model, ref,
                            optimizer, scheduler, rng, records)

    model.eval()
    if run_dir is not None:
        save_checkpoint(model, Path(run_dir) / 'final.pt', config_hash=config_hash)
    return RunResult(records=records, model=model)


def _supplemented(retain: List[QAExample], pool: Sequence[QAExample], floor: Optional[int],
                  rng: random.Random) -> List[QAExample]:
    if floor is None or len(retain) >= floor:
        return retain
    missing = floor - len(retain)
    if missing > len(pool):
        raise PlanError(f'El pool de suplemento ({len(pool)}) no alcanza para {missing} ejemplos.')
    return retain + rng.sample(list(pool), missing)


def run_continual(target, plan: ContinualPlan, config: LossConfig, bundle: DatasetBundle,
                  optim: OptimizerConfig, eval_hook: EvalHook, *, config_hash: str = '',
                  run_dir=None, on_record: Optional[Callable[[RunRecord], None]] = None) -> List[List[RunRecord]]:
    """
    Desaprendizaje continuo: cada subtarea parte del modelo de la anterior.
    El retain de la subtarea k son los datos ficticios aún no olvidados, completados
    desde el pool de suplemento hasta supplement_floor.
    La referencia es el modelo al inicio de la subtarea, o el objetivo con fixed-initial.
    :return: una lista de RunRecord por subtarea
    """
    plan.validate_for(bundle)
    fixed = plan.reference_policy == 'fixed-initial'
    vocab = bundle.vocab()
    supplement_rng = random.Random(optim.seed)

    model = target
    forgotten = set()
    matrix = []
    for k, authors in enumerate(plan.slices):
        forgotten.update(authors)
        forget_k = [e for e in bundle.fictitious if e.author in set(authors)]
        retain_k = [e for e in bundle.fictitious if e.author not in forgotten]
        if not retain_k:
            raise PlanError(f'El retain de la subtarea {k} está vacío.')
        train_retain = _supplemented(retain_k, bundle.supplement, plan.supplement_floor, supplement_rng)

        def hook(m, forget, retain, _retain_k=retain_k):
            # El retain evaluado no incluye el suplemento
            return eval_hook(m, forget, _retain_k)

        subtask_dir = Path(run_dir) / f'subtask_{k}' if run_dir is not None else None
        result = run_unlearning(
            model, config, bundle, replace(optim, seed=optim.seed + k), hook,
            forget=forget_k, retain=train_retain, vocab=vocab,
            reference=target if fixed else model,
            config_hash=config_hash, run_dir=subtask_dir, eval_every_epoch=False,
            subtask=k, kind='continual', on_record=on_record,
        )
        matrix.append(result.records)
        model = result.model
        logger.info('subtarea %d/%d: %d autores olvidados, retain=%d',
                    k + 1, plan.n_subtasks, len(forgotten), len(train_retain))
    return matrix


# Log de resultados

def read_records(path) -> List[RunRecord]:
    """
    :raises MissingArtifactError: si el log no existe
    """
    from unlearnlab.serializers import RunRecordSerializer

    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f'No existe el log de resultados {path}.')
    records = []
    for number, row in enumerate(read_jsonl(path), start=1):
        serializer = RunRecordSerializer(data=row)
        if not serializer.is_valid():
            raise InputError(f'{path.name}:{number} inválido: {serializer.errors}')
        records.append(RunRecord.from_dict(row))
    return records


def append_records(path, records: Sequence[RunRecord]) -> Path:
    """
    Agrega registros al log JSONL. Un registro con la misma clave
    (hash, tipo, método, subtarea, época) reemplaza a la línea existente.
    """
    path = Path(path)
    existing = read_records(path) if path.exists() else []
    incoming = {r.key: r for r in records}
    kept = [r for r in existing if r.key not in incoming]
    seen = set()
    ordered = []
    for r in kept + list(records):
        if r.key in seen:
            continue
        seen.add(r.key)
        ordered.append(incoming.get(r.key, r))
    text = ''.join(json.dumps(r.to_dict(), ensure_ascii=False) + '\n' for r in ordered)
    return atomic_write(path, text)
