from dataclasses import dataclass

from torch.optim.lr_scheduler import LambdaLR

from unlearnlab.services.errors import InputError


@dataclass(frozen=True)
class Schedule:
    """
    Calentamiento lineal durante la primera época y decaimiento lineal después.
    warmup_steps < total_steps siempre que haya pasos, de modo que lr(total_steps) = 0.
    """

    peak_lr: float
    total_steps: int
    warmup_steps: int

    def __post_init__(self):
        if self.peak_lr < 0:
            raise InputError('peak_lr debe ser no negativo.')
        limit = max(self.total_steps - 1, 0)
        if self.total_steps < 0 or not 0 <= self.warmup_steps <= limit:
            raise InputError(
                f'Calendario inválido: total={self.total_steps}, warmup={self.warmup_steps}.'
            )

    @classmethod
    def for_epochs(cls, peak_lr: float, steps_per_epoch: int, epochs: int) -> 'Schedule':
        """
        Calentamiento de una época, recortado a total_steps - 1.
        Con una sola época de un paso no hay calentamiento.
        """
        total = steps_per_epoch * epochs
        warmup = min(steps_per_epoch, total - 1) if total else 0
        return cls(peak_lr=peak_lr, total_steps=total, warmup_steps=warmup)


def lr_at(schedule: Schedule, step: int) -> float:
    """
    Tasa de aprendizaje en un paso dado.
    :param schedule: calendario
    :param step: paso en [0, total_steps]
    :return: lr no negativa
    """
    if not 0 <= step <= schedule.total_steps:
        raise InputError(f'Paso {step} fuera de [0, {schedule.total_steps}].')
    if schedule.total_steps == 0:
        return 0.0

    if schedule.warmup_steps and step <= schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps

    remaining = schedule.total_steps - schedule.warmup_steps
    return schedule.peak_lr * (schedule.total_steps - step) / remaining


def update_lr(schedule: Schedule, update: int) -> float:
    """
    lr de la actualización número `update` (desde 0).
    Durante el calentamiento se usa el extremo derecho del tramo, lr_at(update + 1);
    después lr_at(update). Ninguna actualización cae en lr(0) = 0 ni en lr(total_steps) = 0.
    """
    if schedule.total_steps == 0:
        return 0.0
    update = min(update, schedule.total_steps - 1)
    if update < schedule.warmup_steps:
        return lr_at(schedule, update + 1)
    return lr_at(schedule, update)


def build_scheduler(optimizer, schedule: Schedule) -> LambdaLR:
    """
    Envuelve el calendario en un LambdaLR de torch.
    La lr de la actualización k es update_lr(schedule, k).
    """

    def factor(update):
        if schedule.peak_lr == 0:
            return 0.0
        return update_lr(schedule, update) / schedule.peak_lr

    return LambdaLR(optimizer, lr_lambda=factor)
