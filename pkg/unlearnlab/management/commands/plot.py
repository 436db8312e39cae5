import logging

from unlearnlab.management.base import LabCommand
from unlearnlab.services import plot_services
from unlearnlab.services.seqmodel import CausalLM
from unlearnlab.services.storage import atomic_write
from unlearnlab.services.unlearn import read_records

logger = logging.getLogger(__name__)

KINDS = ('continual', 'trajectory')


class Command(LabCommand):
    help = 'Dibuja en SVG las trayectorias MU-FE o las métricas por subtarea a partir del log de resultados'

    def add_command_arguments(self, parser):
        parser.add_argument('--kind', choices=KINDS, default='trajectory')
        parser.add_argument('--no-baseline', action='store_true',
                            help='Omite la línea del modelo recién inicializado en la trayectoria')

    def run(self, options):
        records = read_records(self.paths.results_log)
        if options['kind'] == 'continual':
            svg = plot_services.continual_svg(records)
        else:
            random_fe = None if options['no_baseline'] else self.random_init_fe(options['force'])
            svg = plot_services.trajectory_svg(records, random_fe=random_fe)
        path = atomic_write(self.paths.plots_dir / f"{options['kind']}.svg", svg)
        self.success(f'Gráfico escrito en {path}')

    def random_init_fe(self, force=False) -> float:
        """
        FE de un CausalLM recién inicializado con la semilla de la configuración.
        Necesita el corpus y el checkpoint objetivo (lado "antes" de CS).
        """
        bundle = self.load_corpus()
        target, _ = self.load_model('target', scope='target', force=force)
        model = CausalLM(self.config.model_config(bundle.vocab().size))
        report = self.build_evaluator(bundle, target).evaluate(model, bundle.forget, [], [])
        logger.info('FE del modelo sin entrenar: %.4f', report.FE)
        return report.FE
