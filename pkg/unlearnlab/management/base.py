import json
import logging

from django.core.management.base import BaseCommand, CommandError

from unlearnlab.services import corpus
from unlearnlab.services.backends import build_backends
from unlearnlab.services.errors import ConfigError, UnlearnLabError
from unlearnlab.services.experiment import config_hash, load_config, parse_override
from unlearnlab.services.metrics import Evaluator
from unlearnlab.services.seqmodel import load_checkpoint
from unlearnlab.services.storage import atomic_write

"""
Base de los comandos del laboratorio: opciones globales, carga de configuración
y traducción de errores a códigos de salida.
"""
logger = logging.getLogger(__name__)

EXIT_CODES = {
    'missing-artifact': 2,
    'config': 3,
    'plan': 3,
    'input': 3,
    'generation': 3,
    'numeric': 4,
    'training': 4,
    'metric': 5,
    'backend': 5,
    'protocol': 5,
    'judge-parse': 5,
}


def error_line(exc: UnlearnLabError) -> str:
    """Una sola línea parseable: error=<tipo> detail=<mensaje>."""
    detail = ' '.join(str(exc).split())
    return f'error={exc.kind} detail={detail}'


class LabCommand(BaseCommand):
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Archivo TOML (o JSON) del experimento')
        parser.add_argument('--seed', type=int, help='Sobrescribe la semilla')
        parser.add_argument('--out', help='Directorio de salida')
        parser.add_argument('--backend-url', help='URL base de los backends remotos')
        parser.add_argument('--force', action='store_true', help='Ignora hashes de configuración distintos')
        parser.add_argument(
            '--set', action='append', default=[], metavar='SECCION.CLAVE=VALOR',
            help='Sobrescribe un valor de la configuración (repetible)',
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def command_overrides(self, options) -> dict:
        return {}

    def handle(self, *args, **options):
        try:
            self.config = self.load_experiment(options)
            self.paths = self.config.paths
            self.run(options)
        except UnlearnLabError as exc:
            logger.error(error_line(exc))
            raise CommandError(error_line(exc), returncode=EXIT_CODES.get(exc.kind, 1))

    def run(self, options):
        raise NotImplementedError

    # Configuración

    def load_experiment(self, options):
        overrides = {}
        for text in options.get('set') or []:
            parts, value = parse_override(text)
            overrides['.'.join(parts)] = value
        overrides.update({
            'seed': options.get('seed'),
            'output_dir': options.get('out'),
            'backends.base_url': options.get('backend_url'),
        })
        overrides.update(self.command_overrides(options))
        return load_config(options.get('config'), overrides)

    def success(self, message: str):
        self.stdout.write(self.style.SUCCESS(message))

    # Artefactos

    def load_corpus(self):
        """Corpus de disco con la partición de la configuración."""
        bundle = corpus.load_bundle(self.paths.corpus_dir)
        if bundle.seed != self.config.seed:
            raise ConfigError(
                f'El corpus se generó con la semilla {bundle.seed}; la configuración usa {self.config.seed}. '
                'Ejecutar gen de nuevo.'
            )
        return corpus.with_split(bundle, self.config.corpus.forget_fraction)

    def load_model(self, name, scope, force=False):
        """
        Carga un checkpoint y comprueba que su hash coincide con el alcance indicado.
        :param name: nombre en checkpoints/ (pretrained, target, surrogate)
        :param scope: alcance de config_hash esperado
        :return: (modelo, metadatos)
        """
        path = self.paths.checkpoint(name)
        model, meta = load_checkpoint(path)
        if not force:
            expected = config_hash(self.config, scope)
            if meta.get('config_hash') != expected:
                raise ConfigError(
                    f'{path} se produjo con la configuración {meta.get("config_hash")}, '
                    f'se esperaba {expected} (usar --force para ignorarlo).'
                )
        return model, meta

    def build_backends(self):
        """:return: (embedder, nli, juez) léxicos, o remotos si hay backends.base_url"""
        section = self.config.backends
        return build_backends(
            section.base_url, timeout=section.timeout, retries=section.retries, backoff=section.backoff,
        )

    def build_evaluator(self, bundle, target):
        embedder, nli, _ = self.build_backends()
        return Evaluator(bundle.vocab(), target, embedder, nli, max_len=self.config.eval.max_len)

    def write_config(self, run_dir):
        return atomic_write(run_dir / 'config.json', self.config.to_json())

    def write_report(self, path, payload):
        return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + '\n')
