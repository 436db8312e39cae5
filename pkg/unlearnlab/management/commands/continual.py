from unlearnlab.management.base import LabCommand
from unlearnlab.services.experiment import config_hash
from unlearnlab.services.losses import METHODS
from unlearnlab.services.unlearn import ContinualPlan, append_records, memorization_precheck, run_continual


class Command(LabCommand):
    help = 'Desaprendizaje continuo: N solicitudes de olvido consecutivas sobre el mismo modelo'

    def add_command_arguments(self, parser):
        parser.add_argument('--method', choices=METHODS, help='Método (pérdida de olvido + regularizador)')
        parser.add_argument('--n-subtasks', type=int, help='Número de subtareas')

    def command_overrides(self, options):
        return {
            'unlearn.method': options.get('method'),
            'continual.n_subtasks': options.get('n_subtasks'),
        }

    def run(self, options):
        bundle = self.load_corpus()
        vocab = bundle.vocab()
        target, _ = self.load_model('target', scope='target', force=options['force'])
        section = self.config.continual

        plan = ContinualPlan.build(
            bundle, section.fraction, section.n_subtasks,
            supplement_floor=section.supplement_floor,
            reference_policy=section.reference_policy,
        )
        if self.config.unlearn.precheck:
            forgotten = {a for part in plan.slices for a in part}
            kept = [e for e in bundle.fictitious if e.author not in forgotten]
            memorization_precheck(target, vocab, kept, self.config.unlearn.precheck_threshold,
                                  max_len=self.config.eval.max_len)

        run_hash = config_hash(self.config, 'run', 'continual')
        run_dir = self.paths.run_dir(run_hash)
        self.write_config(run_dir)

        evaluator = self.build_evaluator(bundle, target)
        results_log = self.paths.results_log
        matrix = run_continual(
            target, plan, self.config.loss_config(continual=True), bundle,
            self.config.unlearn_optimizer(epochs=section.epochs_per_subtask),
            lambda model, forget, retain: evaluator.evaluate(model, forget, retain, bundle.world),
            config_hash=run_hash,
            run_dir=run_dir,
            on_record=lambda record: append_records(results_log, [record]),
        )

        finals = [records[-1] for records in matrix]
        self.write_report(run_dir / 'report.json', {
            'config_hash': run_hash,
            'method': self.config.unlearn.method,
            'subtasks': [
                {'subtask': r.subtask, 'retain_size': r.retain_size, 'report': r.report.to_dict()}
                for r in finals
            ],
        })
        for r in finals:
            self.stdout.write(f'subtarea {r.subtask + 1}: MU={r.report.MU:.4f} FE={r.report.FE:.4f}')
        self.success(f'{self.config.unlearn.method} continuo [{run_hash}]: {plan.n_subtasks} subtareas.')
