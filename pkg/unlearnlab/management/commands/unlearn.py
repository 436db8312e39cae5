from unlearnlab.management.base import LabCommand
from unlearnlab.services.errors import MissingArtifactError
from unlearnlab.services.experiment import config_hash
from unlearnlab.services.losses import METHODS
from unlearnlab.services.unlearn import append_records, latest_run_state, memorization_precheck, run_unlearning


def _parse_bool(text):
    return None if text is None else text == 'true'


class Command(LabCommand):
    help = 'Ejecuta un método de desaprendizaje sobre el modelo objetivo, evaluando cada época'

    def add_command_arguments(self, parser):
        parser.add_argument('--method', choices=METHODS, help='Método (pérdida de olvido + regularizador)')
        parser.add_argument('--alpha', type=float, help='Peso del término ME')
        parser.add_argument('--question-masking', choices=('true', 'false'),
                            help='Enmascara la pregunta en la pérdida de olvido')
        parser.add_argument('--resume', action='store_true', help='Continúa desde el último epoch_<k>.pt')

    def command_overrides(self, options):
        return {
            'unlearn.method': options.get('method'),
            'unlearn.alpha': options.get('alpha'),
            'unlearn.question_masking': _parse_bool(options.get('question_masking')),
        }

    def run(self, options):
        bundle = self.load_corpus()
        vocab = bundle.vocab()
        target, _ = self.load_model('target', scope='target', force=options['force'])
        section = self.config.unlearn

        if section.precheck:
            score = memorization_precheck(target, vocab, bundle.retain, section.precheck_threshold,
                                          max_len=self.config.eval.max_len)
            self.stdout.write(f'ROUGE-L retain del objetivo: {score:.4f}')

        run_hash = config_hash(self.config, 'run', 'unlearn')
        run_dir = self.paths.run_dir(run_hash)
        self.write_config(run_dir)

        resume_from = None
        if options['resume']:
            resume_from = latest_run_state(run_dir)
            if resume_from is None:
                raise MissingArtifactError(f'No hay estados epoch_<k>.pt en {run_dir}.')

        evaluator = self.build_evaluator(bundle, target)
        results_log = self.paths.results_log
        result = run_unlearning(
            target, self.config.loss_config(), bundle, self.config.unlearn_optimizer(),
            lambda model, forget, retain: evaluator.evaluate(model, forget, retain, bundle.world),
            vocab=vocab,
            config_hash=run_hash,
            run_dir=run_dir,
            resume_from=resume_from,
            on_record=lambda record: append_records(results_log, [record]),
        )

        final = result.records[-1]
        self.write_report(run_dir / 'report.json', {
            'config_hash': run_hash,
            'method': final.method,
            'epoch': final.epoch,
            'report': final.report.to_dict(),
        })
        self.success(
            f'{final.method} [{run_hash}] época {final.epoch}: MU={final.report.MU:.4f} FE={final.report.FE:.4f}'
        )
