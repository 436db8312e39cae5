from unlearnlab.management.base import LabCommand
from unlearnlab.services import corpus


class Command(LabCommand):
    help = 'Genera el corpus sintético (autores ficticios, hechos del mundo y plantillas IDK)'

    def run(self, options):
        section = self.config.corpus
        bundle = corpus.generate(
            self.config.seed,
            n_authors=section.n_authors,
            n_qa_per_author=section.n_qa_per_author,
            n_world=section.n_world,
        )
        bundle = corpus.with_split(bundle, section.forget_fraction)
        directory = corpus.save_bundle(bundle, self.paths.corpus_dir)

        self.success(
            f'Corpus escrito en {directory}: {len(bundle.fictitious)} ficticios '
            f'({len(bundle.forget)} forget / {len(bundle.retain)} retain), {len(bundle.world)} mundo.'
        )
