from unlearnlab.management.base import LabCommand
from unlearnlab.services import plot_services
from unlearnlab.services.storage import atomic_write
from unlearnlab.services.unlearn import read_records


class Command(LabCommand):
    help = 'Tabla de resultados (método, MU, FE, Avg) en CSV y opcionalmente en PDF'

    def add_command_arguments(self, parser):
        parser.add_argument('--pdf', action='store_true', help='Genera también tables/results.pdf')

    def run(self, options):
        records = read_records(self.paths.results_log)
        path = atomic_write(self.paths.tables_dir / 'results.csv', plot_services.table_csv(records))
        self.success(f'Tabla escrita en {path}')

        if options['pdf']:
            pdf_path = atomic_write(self.paths.tables_dir / 'results.pdf', plot_services.table_pdf(records))
            self.success(f'PDF escrito en {pdf_path}')
