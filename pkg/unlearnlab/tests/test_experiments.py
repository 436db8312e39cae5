from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, override_settings

from unlearnlab.services import corpus
from unlearnlab.services.backends import LexicalEmbedder, LexicalNliJudge
from unlearnlab.services.experiment import load_config
from unlearnlab.services.losses import METHODS, LossConfig
from unlearnlab.services.metrics import Evaluator
from unlearnlab.services.seqmodel import CausalLM, OptimizerConfig, encode_pair, fine_tune
from unlearnlab.services.unlearn import ContinualPlan, run_continual, run_unlearning
from unlearnlab.tests.helpers import slow, tiny_bundle, tiny_model

"""
Reproducciones direccionales sobre el corpus diminuto y a escala de escritorio. Tardan minutos en CPU.
"""

DESK = str(Path(settings.BASE_DIR) / 'configs' / 'desk.toml')


@slow
@override_settings(UNLEARNLAB_RECORD_WALL_TIME=False)
class DirectionalTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.bundle = tiny_bundle(fraction=0.2)
        cls.vocab = cls.bundle.vocab()
        model = tiny_model(len(cls.vocab), d_model=32, n_heads=4)
        dataset = [encode_pair(cls.vocab, e.question, e.answer) for e in cls.bundle.fictitious]
        cls.target = fine_tune(model, dataset, OptimizerConfig(lr=3e-3, batch_size=8, epochs=60)).model
        cls.evaluator = Evaluator(cls.vocab, cls.target, LexicalEmbedder(), LexicalNliJudge(), max_len=16)
        cls.before = cls.evaluator.evaluate(cls.target, cls.bundle.forget, cls.bundle.retain, cls.bundle.world)

    def evaluate(self, model, forget, retain):
        return self.evaluator.evaluate(model, forget, retain, self.bundle.world)

    def unlearn(self, method, epochs=5, **kwargs):
        optim = OptimizerConfig(lr=1e-3, batch_size=8, epochs=epochs, seed=0)
        return run_unlearning(self.target, LossConfig.from_method(method, **kwargs), self.bundle, optim,
                              self.evaluate, vocab=self.vocab)

    def test_target_memorized_forget_set(self):
        self.assertGreater(self.before.sets['forget'].R, 0.5)

    def test_entropy_maximization_raises_forget_efficacy(self):
        result = self.unlearn('ME+GD', alpha=0.1)
        self.assertGreater(result.records[-1].report.FE, self.before.FE)
        self.assertGreater(result.records[-1].report.MU, 0.5 * self.before.MU)

    def test_zero_alpha_keeps_utility(self):
        result = self.unlearn('ME+GD', alpha=0.0)
        self.assertGreaterEqual(result.records[-1].report.MU, 0.8 * self.before.MU)

    def test_gradient_ascent_forgets(self):
        result = self.unlearn('GA+GD')
        self.assertLess(result.records[-1].report.sets['forget'].R, self.before.sets['forget'].R)

    def test_continual_requests(self):
        plan = ContinualPlan.build(self.bundle, 0.1, 2)
        optim = OptimizerConfig(lr=1e-3, batch_size=8, epochs=3, seed=0)
        matrix = run_continual(self.target, plan, LossConfig.from_method('ME+GD', alpha=1.0), self.bundle,
                               optim, self.evaluate)
        self.assertEqual([len(records) for records in matrix], [1, 1])
        for records in matrix:
            self.assertGreater(records[-1].report.FE, self.before.FE)


@slow
@override_settings(UNLEARNLAB_RECORD_WALL_TIME=False)
class DeskScaleTests(SimpleTestCase):
    """
    Experimentos de escritorio con configs/desk.toml: 100 autores, forget05 y forget10,
    y diez solicitudes continuas de forget01.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = load_config(DESK)
        section = cls.config.corpus
        full = corpus.generate(cls.config.seed, section.n_authors, section.n_qa_per_author, section.n_world)
        cls.vocab = full.vocab()

        model = CausalLM(cls.config.model_config(cls.vocab.size))
        world = [encode_pair(cls.vocab, e.question, e.answer) for e in full.world]
        pretrained = fine_tune(model, world, cls.config.train_optimizer(cls.config.pretrain)).model
        examples = list(full.fictitious) + list(full.world)
        dataset = [encode_pair(cls.vocab, e.question, e.answer) for e in examples]
        cls.target = fine_tune(pretrained, dataset, cls.config.train_optimizer(cls.config.finetune)).model

        cls.forget05 = corpus.with_split(full, 0.05)
        cls.forget10 = corpus.with_split(full, 0.10)
        cls.evaluator = Evaluator(cls.vocab, cls.target, LexicalEmbedder(), LexicalNliJudge(),
                                  max_len=cls.config.eval.max_len)

    def hook(self, bundle):
        return lambda model, forget, retain: self.evaluator.evaluate(model, forget, retain, bundle.world)

    def unlearn(self, bundle, method, every_epoch=True):
        loss = LossConfig.from_method(method, alpha=self.config.unlearn.alpha, beta=self.config.unlearn.beta)
        result = run_unlearning(self.target, loss, bundle, self.config.unlearn_optimizer(), self.hook(bundle),
                                vocab=self.vocab, eval_every_epoch=every_epoch)
        return result.records

    def continual(self, method, reference_policy='previous'):
        section = self.config.continual
        plan = ContinualPlan.build(self.forget05, section.fraction, section.n_subtasks,
                                   reference_policy=reference_policy)
        loss = LossConfig.from_method(method, alpha=section.alpha, beta=self.config.unlearn.beta)
        matrix = run_continual(self.target, plan, loss, self.forget05,
                               self.config.unlearn_optimizer(epochs=section.epochs_per_subtask),
                               self.hook(self.forget05))
        self.assertEqual(len(matrix), 10)
        return [records[-1].report.MU for records in matrix]

    def test_idk_ap_keeps_retain_while_idk_gd_loses_it(self):
        gd = self.unlearn(self.forget05, 'IDK+GD')
        ap = self.unlearn(self.forget05, 'IDK+AP')
        for records in (gd, ap):
            self.assertEqual([r.epoch for r in records], [1, 2, 3, 4, 5])
            self.assertLessEqual(min(r.report.sets['forget'].R for r in records), 0.2)
        self.assertLess(min(r.report.sets['retain'].R for r in gd), 0.5)
        self.assertGreaterEqual(min(r.report.sets['retain'].R for r in ap), 0.8)

    def test_entropy_maximization_keeps_utility_with_top_efficacy(self):
        finals = {method: self.unlearn(self.forget10, method, every_epoch=False)[-1].report for method in METHODS}
        best_fe = max(report.FE for report in finals.values())
        self.assertGreater(finals['ME+GD'].MU, finals['GA+GD'].MU)
        self.assertGreaterEqual(finals['ME+GD'].FE, best_fe - 0.05)

    def test_entropy_maximization_efficacy_grows_each_epoch(self):
        before = self.evaluator.evaluate(self.target, self.forget05.forget, self.forget05.retain,
                                         self.forget05.world)
        values = [before.FE] + [r.report.FE for r in self.unlearn(self.forget05, 'ME+GD')]
        for previous, current in zip(values, values[1:]):
            self.assertGreaterEqual(current, previous * 0.98)
        self.assertGreater(values[-1], values[0])

    def test_continual_gradient_ascent_collapses(self):
        utilities = self.continual('GA+GD')
        self.assertLess(min(utilities), 0.1)

    def test_continual_entropy_maximization_keeps_utility(self):
        utilities = self.continual('ME+GD')
        self.assertGreaterEqual(min(utilities), 0.5)

    def test_fixed_initial_reference_stabilizes_npo(self):
        previous = self.continual('NPO+GD')
        fixed = self.continual('NPO+GD', reference_policy='fixed-initial')
        self.assertGreater(min(fixed), min(previous))
