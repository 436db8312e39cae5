from pathlib import Path

from unlearnlab.management.base import LabCommand
from unlearnlab.services.experiment import config_hash
from unlearnlab.services.seqmodel import encode_prompt, greedy_decode_batch, load_checkpoint


class Command(LabCommand):
    help = 'Tasa de alucinación de un modelo (por defecto el sustituto) en las preguntas del forget'

    def add_command_arguments(self, parser):
        parser.add_argument('--checkpoint', help='Checkpoint a juzgar en lugar de checkpoints/surrogate.pt')

    def run(self, options):
        bundle = self.load_corpus()
        if options['checkpoint']:
            path = Path(options['checkpoint'])
            model, meta = load_checkpoint(path)
        else:
            path = self.paths.checkpoint('surrogate')
            model, meta = self.load_model('surrogate', scope='surrogate', force=options['force'])
        produced_by = meta.get('config_hash') or config_hash(self.config, 'surrogate')

        _, _, judge = self.build_backends()
        vocab = bundle.vocab()
        prompts = [encode_prompt(vocab, e.question) for e in bundle.forget]
        outputs = [vocab.decode(seq.ids) for seq in greedy_decode_batch(model, prompts, self.config.eval.max_len)]

        items = []
        for example, output in zip(bundle.forget, outputs):
            items.append({
                'question': example.question,
                'reference': example.answer,
                'output': output,
                'judgment': judge.judge(example.question, example.answer, output),
            })
        hallucinations = sum(1 for item in items if item['judgment'] == 'yes')
        rate = hallucinations / len(items)

        out = self.write_report(self.paths.judge_dir / f'{produced_by}.json', {
            'config_hash': produced_by,
            'checkpoint': str(path),
            'n': len(items),
            'hallucinations': hallucinations,
            'rate': rate,
            'items': items,
        })
        self.success(f'Tasa de alucinación {rate:.4f} ({hallucinations}/{len(items)}) -> {out}')
