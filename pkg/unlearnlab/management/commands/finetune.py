from unlearnlab.management.base import LabCommand
from unlearnlab.services.experiment import config_hash
from unlearnlab.services.seqmodel import encode_pair, fine_tune, save_checkpoint
from unlearnlab.services.unlearn import memorization_precheck


class Command(LabCommand):
    help = 'Ajusta el modelo preentrenado sobre el corpus ficticio (modelo objetivo o sustituto)'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--retain-only', action='store_true',
            help='Entrena solo con el retain (modelo sustituto, nunca ve el forget)',
        )

    def run(self, options):
        bundle = self.load_corpus()
        vocab = bundle.vocab()
        pretrained, _ = self.load_model('pretrained', scope='pretrain', force=options['force'])

        retain_only = options['retain_only']
        examples = list(bundle.retain if retain_only else bundle.fictitious)
        if self.config.finetune.replay_world:
            examples.extend(bundle.world)
        dataset = [encode_pair(vocab, e.question, e.answer) for e in examples]
        result = fine_tune(pretrained, dataset, self.config.train_optimizer(self.config.finetune))

        name, scope = ('surrogate', 'surrogate') if retain_only else ('target', 'target')
        path = save_checkpoint(
            result.model, self.paths.checkpoint(name),
            config_hash=config_hash(self.config, scope),
            extra={'epoch_nll': result.epoch_nll},
        )

        # ROUGE-L del retain como indicador de memorización
        score = memorization_precheck(result.model, vocab, bundle.retain, threshold=0.0,
                                      max_len=self.config.eval.max_len)
        self.success(f'Modelo {name} en {path} (ROUGE-L retain {score:.4f}).')
