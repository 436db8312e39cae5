import numpy as np
from django.test import SimpleTestCase, override_settings

from unlearnlab.services import backends
from unlearnlab.services.backends import LexicalEmbedder, LexicalHallucinationJudge, LexicalNliJudge
from unlearnlab.services.corpus import FIRST_NAMES, POOLS
from unlearnlab.services.metrics import ENTAILMENT


class LexicalEmbedderTests(SimpleTestCase):

    def test_unit_norm_and_deterministic(self):
        embedder = LexicalEmbedder()
        first, second = embedder.embed(['born in oslo.', 'born in oslo.'])
        self.assertAlmostEqual(float(np.linalg.norm(first)), 1.0, places=12)
        self.assertTrue(np.array_equal(first, second))
        self.assertEqual(first.shape, (256,))

    def test_empty_text_uses_reserved_bucket(self):
        vector = LexicalEmbedder().embed_one(' . ')
        self.assertEqual(vector[0], 1.0)
        self.assertEqual(float(np.abs(vector[1:]).sum()), 0.0)

    def test_buckets_skip_reserved(self):
        embedder = LexicalEmbedder()
        for token in POOLS['birthplace']:
            self.assertGreaterEqual(embedder.bucket(token), 1)
            self.assertLess(embedder.bucket(token), 256)


class LexicalNliTests(SimpleTestCase):

    def setUp(self):
        self.nli = LexicalNliJudge()
        self.first, self.second = POOLS['birthplace'][:2]

    def test_same_fact_is_entailment(self):
        text = f'she was born in {self.first}.'
        self.assertEqual(self.nli.classify(text, text), ENTAILMENT)

    def test_different_value_is_contradiction(self):
        label = self.nli.classify(f'she was born in {self.first}.', f'she was born in {self.second}.')
        self.assertEqual(label, backends.CONTRADICTION)

    def test_unrelated_is_neutral(self):
        self.assertEqual(self.nli.classify(f'she was born in {self.first}.', 'i have no idea.'), backends.NEUTRAL)

    def test_empty_hypothesis_is_neutral(self):
        self.assertEqual(self.nli.classify('she was born in lima.', ''), backends.NEUTRAL)

    def test_custom_pools(self):
        nli = LexicalNliJudge(pools={'colour': ('red', 'blue')})
        self.assertEqual(nli.classify('the car is red', 'the car is blue'), backends.CONTRADICTION)

    def test_value_from_another_slot_is_contradiction(self):
        job = POOLS['father_job'][0]
        label = self.nli.classify(f'she was born in {self.first}.', f'she was born in {job}.')
        self.assertEqual(label, backends.CONTRADICTION)
        self.assertTrue(self.nli.conflicts(f'she was born in {self.first}.', 'she was born in 1960.'))

    def test_extra_attribute_is_not_contradiction(self):
        premise = f'she was born in {self.first}.'
        hypothesis = f'in 1960 she was born in {self.first}.'
        self.assertFalse(self.nli.conflicts(premise, hypothesis))
        self.assertEqual(self.nli.classify(premise, hypothesis), ENTAILMENT)

    def test_omitted_author_name_is_not_contradiction(self):
        premise = f'{FIRST_NAMES[0]} was born in {self.first}.'
        self.assertFalse(self.nli.conflicts(premise, f'she was born in {self.first} in 1960.'))

    def test_custom_pools_compare_across_slots(self):
        nli = LexicalNliJudge(pools={'colour': ('red', 'blue'), 'size': ('big', 'small')})
        self.assertEqual(nli.classify('the car is red', 'the car is small'), backends.CONTRADICTION)


class HallucinationJudgeTests(SimpleTestCase):

    def setUp(self):
        self.judge = LexicalHallucinationJudge()
        self.first, self.second = POOLS['birthplace'][:2]
        self.question = 'where was ana born?'
        self.reference = f'ana was born in {self.first}.'

    def test_refusal_is_not_hallucination(self):
        self.assertEqual(self.judge.judge(self.question, self.reference, "i don't know."), 'no')
        self.assertEqual(self.judge.judge(self.question, self.reference, ''), 'no')

    def test_consistent_answer(self):
        self.assertEqual(self.judge.judge(self.question, self.reference, self.reference), 'no')

    def test_wrong_fact_is_hallucination(self):
        self.assertEqual(self.judge.judge(self.question, self.reference, f'ana was born in {self.second}.'), 'yes')


class BuildBackendsTests(SimpleTestCase):

    def test_lexical_without_url(self):
        embedder, nli, judge = backends.build_backends(None)
        self.assertIsInstance(embedder, LexicalEmbedder)
        self.assertIsInstance(nli, LexicalNliJudge)
        self.assertIs(judge.nli, nli)

    @override_settings(UNLEARNLAB_BACKEND_TIMEOUT=3.0, AUTH_TOKEN='secret')
    def test_remote_with_url(self):
        embedder, nli, judge = backends.build_backends('http://127.0.0.1:9', retries=0)
        self.assertIsInstance(embedder, backends.RemoteEmbedder)
        self.assertIsInstance(nli, backends.RemoteNliJudge)
        self.assertIsInstance(judge, backends.RemoteHallucinationJudge)
        self.assertEqual(judge.cfg.timeout, 3.0)
        self.assertEqual(judge.cfg.retries, 0)
        self.assertEqual(judge.cfg.auth_token, 'secret')

    def test_remote_judge_short_circuits_empty_output(self):
        _, _, judge = backends.build_backends('http://127.0.0.1:9', retries=0)
        self.assertEqual(judge.judge('q', 'r', '  '), 'no')
