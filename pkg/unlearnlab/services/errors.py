"""
Jerarquía de errores del laboratorio de desaprendizaje.
Los comandos de gestión traducen cada familia a un código de salida.
"""


class UnlearnLabError(Exception):
    """Error base del proyecto."""

    kind = 'error'


class InputError(UnlearnLabError, ValueError):
    """Entrada fuera del dominio de una operación."""

    kind = 'input'


class NumericError(UnlearnLabError, ArithmeticError):
    """Pérdida o gradiente no finito. Guarda el término que lo causó."""

    kind = 'numeric'

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class TrainingError(NumericError):
    """Divergencia durante el entrenamiento, con el índice del paso."""

    kind = 'training'

    def __init__(self, message, step=None, term=None):
        super().__init__(message, term=term)
        self.step = step


class GenerationError(UnlearnLabError):
    """El generador de corpus agotó un pool de atributos."""

    kind = 'generation'


class ConfigError(UnlearnLabError):
    kind = 'config'


class PlanError(ConfigError):
    """Plan continuo inválido (porciones solapadas, retain vacío...)."""

    kind = 'plan'


class MissingArtifactError(UnlearnLabError):
    """Falta un artefacto previo (corpus, checkpoint, log de resultados)."""

    kind = 'missing-artifact'


class MetricError(UnlearnLabError):
    kind = 'metric'


class BackendError(UnlearnLabError):
    """Fallo de un servicio externo tras agotar los reintentos."""

    kind = 'backend'


class ProtocolError(BackendError):
    """Respuesta con cuerpo mal formado."""

    kind = 'protocol'


class JudgeParseError(ProtocolError):
    kind = 'judge-parse'
