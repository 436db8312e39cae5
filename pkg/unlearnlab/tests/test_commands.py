import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from unlearnlab.management.base import EXIT_CODES, error_line
from unlearnlab.services.errors import PlanError
from unlearnlab.services.experiment import config_hash, load_config
from unlearnlab.services.unlearn import read_records

TINY = str(Path(settings.BASE_DIR) / 'configs' / 'tiny.toml')


def run(name, out, *args):
    stdout = StringIO()
    call_command(name, '--config', TINY, '--out', str(out), *args, stdout=stdout)
    return stdout.getvalue()


class ExitCodeTests(SimpleTestCase):

    def setUp(self):
        self.out = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.out, ignore_errors=True)

    def assertExitCode(self, code, name, *args):
        with self.assertRaises(CommandError) as ctx:
            run(name, self.out, *args)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception

    def test_missing_corpus(self):
        error = self.assertExitCode(2, 'eval')
        self.assertTrue(str(error).startswith('error=missing-artifact detail='))

    def test_bad_override(self):
        self.assertExitCode(3, 'gen', '--set', 'alpha')
        self.assertExitCode(3, 'gen', '--set', 'unlearn.gamma=1')

    def test_missing_results_log(self):
        self.assertExitCode(2, 'table')

    def test_error_line_is_single_line(self):
        self.assertEqual(error_line(PlanError('no\n  caben')), 'error=plan detail=no caben')
        self.assertEqual(EXIT_CODES['plan'], 3)


@override_settings(UNLEARNLAB_RECORD_WALL_TIME=False)
class PipelineTests(SimpleTestCase):
    """gen -> pretrain -> finetune -> unlearn -> eval -> continual -> plot/table/judge con tiny.toml."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.out = Path(tempfile.mkdtemp())
        cls.config = load_config(TINY, {'output_dir': str(cls.out)})
        run('gen', cls.out)
        run('pretrain', cls.out)
        run('finetune', cls.out)
        run('finetune', cls.out, '--retain-only')
        run('unlearn', cls.out)
        cls.eval_stdout = run('eval', cls.out)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.out, ignore_errors=True)
        super().tearDownClass()

    def test_gen_is_deterministic(self):
        other = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, other, ignore_errors=True)
        run('gen', other)
        for name in ('fictitious.jsonl', 'world.jsonl', 'supplement.jsonl', 'idk.txt', 'manifest.json'):
            self.assertEqual((self.out / 'corpus' / name).read_bytes(), (other / 'corpus' / name).read_bytes(), name)

    def test_checkpoints(self):
        for name in ('pretrained', 'target', 'surrogate'):
            self.assertTrue(self.config.paths.checkpoint(name).exists(), name)

    def test_unlearn_run(self):
        run_dir = self.config.paths.run_dir(config_hash(self.config, 'run', 'unlearn'))
        for name in ('config.json', 'report.json', 'final.pt', 'epoch_1.pt', 'epoch_2.pt'):
            self.assertTrue((run_dir / name).exists(), name)
        report = json.loads((run_dir / 'report.json').read_text(encoding='utf-8'))
        self.assertEqual(report['method'], 'GA+GD')
        self.assertEqual(report['epoch'], 2)

    def test_eval_report(self):
        report = json.loads(self.eval_stdout[:self.eval_stdout.rindex('}') + 1])
        for name in ('forget', 'retain', 'world'):
            self.assertEqual(len(report[name]), 8, name)
            for key, value in report[name].items():
                self.assertGreaterEqual(value, 0.0, key)
                self.assertLessEqual(value, 1.0, key)

    def test_results_log(self):
        records = read_records(self.config.paths.results_log)
        unlearn = [r for r in records if r.kind == 'unlearn']
        self.assertEqual([r.epoch for r in unlearn], [1, 2])
        self.assertTrue(all(r.wall_time == 0.0 for r in unlearn))
        self.assertTrue(any(r.kind == 'eval' for r in records))

    def test_eval_rejects_foreign_checkpoint(self):
        other = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, other, ignore_errors=True)
        shutil.copytree(self.out, other, dirs_exist_ok=True)
        with self.assertRaises(CommandError) as ctx:
            run('eval', other, '--set', 'unlearn.method=NPO+GD',
                '--checkpoint', str(other / 'checkpoints' / 'pretrained.pt'))
        self.assertEqual(ctx.exception.returncode, 3)

    def test_continual_then_plots(self):
        other = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, other, ignore_errors=True)
        shutil.copytree(self.out, other, dirs_exist_ok=True)
        config = load_config(TINY, {'output_dir': str(other)})

        run('continual', other)
        run_dir = config.paths.run_dir(config_hash(config, 'run', 'continual'))
        report = json.loads((run_dir / 'report.json').read_text(encoding='utf-8'))
        self.assertEqual([s['subtask'] for s in report['subtasks']], [0, 1])

        run('plot', other)
        run('plot', other, '--kind', 'continual')
        run('table', other, '--pdf')
        trajectory = (other / 'plots' / 'trajectory.svg').read_text(encoding='utf-8')
        self.assertTrue(trajectory.count('<circle') >= 2)
        self.assertIn('random init', trajectory)
        self.assertIn('stroke-dasharray', trajectory)
        continual = (other / 'plots' / 'continual.svg').read_text(encoding='utf-8')
        self.assertIn('ROUGE / ES', continual)
        self.assertIn('MU / FE', continual)
        csv = (other / 'tables' / 'results.csv').read_text(encoding='utf-8').splitlines()
        self.assertEqual(csv[0], 'method,MU,FE,Avg')
        self.assertEqual(len(csv), 3)
        self.assertTrue((other / 'tables' / 'results.pdf').read_bytes().startswith(b'%PDF'))

    def test_judge(self):
        run('judge', self.out)
        path = self.out / 'judge' / f'{config_hash(self.config, "surrogate")}.json'
        report = json.loads(path.read_text(encoding='utf-8'))
        self.assertEqual(report['n'], 4)
        self.assertEqual(report['hallucinations'], sum(item['judgment'] == 'yes' for item in report['items']))
        self.assertAlmostEqual(report['rate'], report['hallucinations'] / 4)
