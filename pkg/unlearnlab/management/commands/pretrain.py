from unlearnlab.management.base import LabCommand
from unlearnlab.services.experiment import config_hash
from unlearnlab.services.seqmodel import CausalLM, encode_pair, fine_tune, save_checkpoint


class Command(LabCommand):
    help = 'Preentrena un modelo nuevo sobre los hechos del mundo'

    def run(self, options):
        bundle = self.load_corpus()
        vocab = bundle.vocab()
        model = CausalLM(self.config.model_config(vocab.size))

        dataset = [encode_pair(vocab, e.question, e.answer) for e in bundle.world]
        result = fine_tune(model, dataset, self.config.train_optimizer(self.config.pretrain))

        path = save_checkpoint(
            result.model, self.paths.checkpoint('pretrained'),
            config_hash=config_hash(self.config, 'pretrain'),
            extra={'epoch_nll': result.epoch_nll},
        )
        final = result.epoch_nll[-1] if result.epoch_nll else float('nan')
        self.success(f'Modelo preentrenado en {path} (nll final {final:.4f}).')
