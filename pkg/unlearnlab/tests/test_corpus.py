import random
import tempfile
from collections import Counter
from pathlib import Path

from django.test import SimpleTestCase

from unlearnlab.services import corpus
from unlearnlab.services.corpus import FORGET, RETAIN, WORLD
from unlearnlab.services.errors import GenerationError, InputError, MissingArtifactError, PlanError


class GenerateTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = corpus.generate(7, n_authors=20, n_qa_per_author=10, n_world=50)

    def test_same_seed_same_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = corpus.save_bundle(corpus.with_split(corpus.generate(7, 20, 10, 50), 0.1), Path(tmp) / 'a')
            second = corpus.save_bundle(corpus.with_split(corpus.generate(7, 20, 10, 50), 0.1), Path(tmp) / 'b')
            for name in ('fictitious.jsonl', 'world.jsonl', 'supplement.jsonl', 'idk.txt', 'vocab.json',
                         'manifest.json'):
                self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_counts(self):
        self.assertEqual(len(self.bundle.authors), 20)
        self.assertEqual(len(self.bundle.fictitious), 200)
        self.assertEqual(len(self.bundle.world), 50)
        self.assertEqual(len(self.bundle.idk), 100)

    def test_names_are_unique(self):
        names = self.bundle.author_names
        self.assertEqual(len(set(names)), len(names))

    def test_attribute_values_come_from_pools(self):
        for author in self.bundle.authors:
            for slot, value in author.attributes.items():
                self.assertIn(value, corpus.POOLS[slot])
            self.assertNotEqual(author.attributes['book_first'], author.attributes['book_famous'])

    def test_perturbed_answers_are_wrong(self):
        for example in self.bundle.fictitious + self.bundle.world:
            self.assertGreaterEqual(len(example.perturbed_answers), 3)
            for wrong in example.perturbed_answers:
                self.assertNotEqual(wrong, example.answer)

    def test_perturbation_changes_only_the_slot(self):
        by_author = {a.name: a for a in self.bundle.authors}
        for example in self.bundle.fictitious:
            profile = by_author[example.author]
            slot = next(s for s, q, _, _ in corpus.SLOT_TEMPLATES if q.format(name=profile.name) == example.question)
            truth = profile.attributes[slot]
            self.assertTrue(corpus.contains_value(example.answer, truth))
            self.assertTrue(corpus.contains_value(example.paraphrased_answer, truth))
            for wrong in example.perturbed_answers:
                self.assertFalse(corpus.contains_value(wrong, truth) and wrong == example.answer)
                self.assertTrue(any(corpus.contains_value(wrong, v) for v in corpus.POOLS[slot] if v != truth))

    def test_world_questions_share_no_author_names(self):
        names = self.bundle.author_names
        for example in self.bundle.world:
            self.assertIsNone(example.author)
            self.assertEqual(example.set_tag, WORLD)
            for name in names:
                self.assertNotIn(name, example.question)

    def test_idk_templates_mention_no_pool_value(self):
        pools = corpus.attribute_pools()
        for template in corpus.idk_templates():
            for values in pools.values():
                for value in values:
                    self.assertFalse(corpus.contains_value(template, value), (template, value))

    def test_text_is_lowercase(self):
        for text in self.bundle.texts():
            self.assertEqual(text, text.lower())

    def test_rejects_small_inputs(self):
        with self.assertRaises(InputError):
            corpus.generate(0, n_authors=9)
        with self.assertRaises(InputError):
            corpus.generate(0, n_authors=10, n_qa_per_author=3)

    def test_too_many_questions_per_author(self):
        corpus.generate(0, n_authors=10, n_qa_per_author=len(corpus.SLOT_TEMPLATES))
        with self.assertRaises(GenerationError):
            corpus.generate(0, n_authors=10, n_qa_per_author=len(corpus.SLOT_TEMPLATES) + 1)

    def test_supplement_pool_size(self):
        self.assertEqual(len(self.bundle.supplement), corpus.SUPPLEMENT_POOL_SIZE)
        self.assertEqual(corpus.SUPPLEMENT_POOL_SIZE, 55)

    def test_pool_exhaustion(self):
        with self.assertRaises(GenerationError):
            corpus.generate(0, n_authors=145)
        with self.assertRaises(GenerationError):
            corpus.generate(0, n_authors=10, n_world=201)


class SplitTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = corpus.generate(3, n_authors=20, n_qa_per_author=10, n_world=20)

    def test_ten_percent_of_twenty_authors(self):
        forget, retain = corpus.split(self.bundle, fraction=0.1)
        self.assertEqual(len(forget), 20)
        self.assertEqual(len({e.author for e in forget}), 2)
        self.assertEqual(len(retain), 180)

    def test_split_is_an_author_partition(self):
        forget, retain = corpus.split(self.bundle, fraction=0.25)
        forget_authors = {e.author for e in forget}
        retain_authors = {e.author for e in retain}
        self.assertFalse(forget_authors & retain_authors)
        self.assertEqual({e.question for e in forget} | {e.question for e in retain},
                         {e.question for e in self.bundle.fictitious})
        self.assertTrue(all(e.set_tag == FORGET for e in forget))
        self.assertTrue(all(e.set_tag == RETAIN for e in retain))

    def test_hundred_authors_five_percent(self):
        bundle = corpus.generate(0, n_authors=100, n_qa_per_author=4, n_world=0)
        split = corpus.with_split(bundle, 0.05)
        self.assertEqual(len(split.forgotten_authors), 5)

    def test_zero_fraction_is_rejected(self):
        with self.assertRaises(InputError):
            corpus.split(self.bundle, fraction=0.0)
        with self.assertRaises(InputError):
            corpus.split(self.bundle, fraction=0.04)

    def test_explicit_authors(self):
        names = self.bundle.author_names[:3]
        forget, _ = corpus.split(self.bundle, authors=names)
        self.assertEqual({e.author for e in forget}, set(names))
        with self.assertRaises(InputError):
            corpus.split(self.bundle, authors=['nobody here'])

    def test_continual_slices(self):
        bundle = corpus.generate(0, n_authors=100, n_qa_per_author=4, n_world=0)
        slices = corpus.continual_slices(bundle, 0.1, 9)
        self.assertEqual(len(slices), 9)
        seen = set()
        for part in slices:
            self.assertEqual(len(part), 10)
            self.assertFalse(seen & set(part))
            seen.update(part)
        self.assertGreaterEqual(100 - len(seen), 10)

    def test_continual_slices_must_leave_an_author(self):
        with self.assertRaises(PlanError):
            corpus.continual_slices(self.bundle, 0.1, 10)


class IdkSampleTests(SimpleTestCase):

    def test_single_template(self):
        self.assertEqual(corpus.idk_sample(['no idea.'], random.Random(0)), 'no idea.')

    def test_seeded_sequence(self):
        templates = corpus.idk_templates()
        first = [corpus.idk_sample(templates, random.Random(4)) for _ in range(5)]
        second = [corpus.idk_sample(templates, random.Random(4)) for _ in range(5)]
        self.assertEqual(first, second)

    def test_uniform_frequencies(self):
        templates = corpus.idk_templates()
        rng = random.Random(0)
        counts = Counter(corpus.idk_sample(templates, rng) for _ in range(10_000))
        sigma = (10_000 * 0.01 * 0.99) ** 0.5
        for template in templates:
            self.assertLess(abs(counts[template] - 100), 5 * sigma)

    def test_empty_templates(self):
        with self.assertRaises(InputError):
            corpus.idk_sample([], random.Random(0))


class PersistenceTests(SimpleTestCase):

    def test_round_trip(self):
        bundle = corpus.with_split(corpus.generate(1, n_authors=10, n_qa_per_author=4, n_world=10), 0.2)
        with tempfile.TemporaryDirectory() as tmp:
            corpus.save_bundle(bundle, tmp)
            loaded = corpus.load_bundle(tmp)
        self.assertEqual(loaded.fictitious, bundle.fictitious)
        self.assertEqual(loaded.world, bundle.world)
        self.assertEqual(loaded.forget, bundle.forget)
        self.assertEqual(loaded.idk, bundle.idk)
        self.assertEqual(loaded.vocab(), bundle.vocab())

    def test_jsonl_fields(self):
        bundle = corpus.generate(1, n_authors=10, n_qa_per_author=4, n_world=10)
        row = bundle.fictitious[0].to_dict()
        self.assertEqual(set(row), {'question', 'answer', 'paraphrase', 'perturbed', 'tag', 'author'})

    def test_missing_corpus(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(MissingArtifactError):
                corpus.load_bundle(tmp)

    def test_invalid_row(self):
        bundle = corpus.generate(1, n_authors=10, n_qa_per_author=4, n_world=10)
        with tempfile.TemporaryDirectory() as tmp:
            corpus.save_bundle(bundle, tmp)
            path = Path(tmp) / 'world.jsonl'
            path.write_text(path.read_text(encoding='utf-8') + '{"question": "x"}\n', encoding='utf-8')
            with self.assertRaises(InputError):
                corpus.load_bundle(tmp)
