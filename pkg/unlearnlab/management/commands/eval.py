import json
from pathlib import Path

from unlearnlab.management.base import LabCommand
from unlearnlab.services.errors import ConfigError
from unlearnlab.services.experiment import config_hash
from unlearnlab.services.seqmodel import load_checkpoint
from unlearnlab.services.unlearn import RunRecord, append_records


class Command(LabCommand):
    help = 'Evalúa un checkpoint (por defecto el final.pt de la ejecución actual) y emite su MetricReport'

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', help='Ruta del checkpoint a evaluar')

    def run(self, options):
        bundle = self.load_corpus()
        target, _ = self.load_model('target', scope='target', force=options['force'])

        run_hashes = {config_hash(self.config, 'run', kind) for kind in ('unlearn', 'continual')}
        accepted = run_hashes | {config_hash(self.config, 'target'), config_hash(self.config, 'surrogate')}
        path = Path(options['checkpoint']) if options['checkpoint'] else \
            self.paths.run_dir(config_hash(self.config, 'run', 'unlearn')) / 'final.pt'

        model, meta = load_checkpoint(path)
        produced_by = meta.get('config_hash') or ''
        if produced_by not in accepted and not options['force']:
            raise ConfigError(
                f'{path} se produjo con la configuración {produced_by or "?"}, '
                'que no corresponde a la actual (usar --force para evaluarlo igualmente).'
            )

        evaluator = self.build_evaluator(bundle, target)
        report = evaluator.evaluate(model, bundle.forget, bundle.retain, bundle.world)
        record = RunRecord(
            method=self.config.unlearn.method if produced_by in run_hashes else path.stem,
            epoch=0,
            report=report,
            wall_time=0.0,
            seed=self.config.seed,
            config_hash=produced_by,
            retain_size=len(bundle.retain),
            kind='eval',
        )
        append_records(self.paths.results_log, [record])
        if produced_by:
            self.write_report(self.paths.run_dir(produced_by) / f'eval_{path.stem}.json', {
                'config_hash': produced_by,
                'method': record.method,
                'checkpoint': str(path),
                'report': report.to_dict(),
            })

        self.stdout.write(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        self.success(f'{path}: MU={report.MU:.4f} FE={report.FE:.4f}')
