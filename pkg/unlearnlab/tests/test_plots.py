import re
from dataclasses import replace

from django.test import SimpleTestCase

from unlearnlab.services import plot_services
from unlearnlab.services.errors import InputError, MissingArtifactError
from unlearnlab.services.metrics import MetricReport, SetMetrics
from unlearnlab.services.unlearn import RunRecord

RADIUS_RE = re.compile(r'<circle [^>]* r="([^"]+)"')
POLYLINE_RE = re.compile(r'<polyline\b[^>]*>')
PATH_RE = re.compile(r'<path\b[^>]*>')
SEGMENT_RE = re.compile(r'd="M ([-\d.]+),([-\d.]+) L ([-\d.]+),([-\d.]+)')


def make_record(epoch, forget=0.1, retain=0.7, method='ME+GD', config_hash='run1', kind='unlearn', subtask=None,
                world=None):
    sets = {'forget': SetMetrics(*[forget] * 6), 'retain': SetMetrics(*[retain] * 6)}
    if world is not None:
        sets['world'] = SetMetrics(*[world] * 6)
    report = MetricReport(sets=sets)
    return RunRecord(method=method, epoch=epoch, report=report, wall_time=0.0, seed=0,
                     config_hash=config_hash, subtask=subtask, kind=kind)


class TrajectoryTests(SimpleTestCase):

    def test_single_marker(self):
        svg = plot_services.trajectory_svg([make_record(0)])
        radii = [float(r) for r in RADIUS_RE.findall(svg)]
        # marcador + leyenda
        self.assertEqual(len(radii), 2)
        self.assertEqual(radii[0], plot_services.marker_radius(0))

    def test_radius_grows_with_epoch(self):
        records = [make_record(epoch, forget=0.1 * epoch) for epoch in range(5)]
        radii = [float(r) for r in RADIUS_RE.findall(plot_services.trajectory_svg(records))][:5]
        self.assertEqual(radii, sorted(radii))
        self.assertEqual(len(set(radii)), 5)

    def test_deterministic(self):
        records = [make_record(e) for e in range(3)] + [make_record(e, method='GA+GD', config_hash='run2')
                                                       for e in range(3)]
        self.assertEqual(plot_services.trajectory_svg(records), plot_services.trajectory_svg(records))

    def test_legend_labels(self):
        records = [make_record(1, config_hash='aaa'), make_record(1, config_hash='bbb'),
                   make_record(1, method='GA+GD', config_hash='ccc')]
        labels = list(plot_services.group_series(records, 'unlearn'))
        self.assertEqual(labels, ['ME+GD (aaa)', 'ME+GD (bbb)', 'GA+GD'])

    def test_without_baseline_nothing_is_dashed(self):
        self.assertNotIn('stroke-dasharray', plot_services.trajectory_svg([make_record(0)]))

    def test_random_init_baseline_is_a_dashed_horizontal_line(self):
        svg = plot_services.trajectory_svg([make_record(0), make_record(1)], random_fe=0.4)
        dashed = [path for path in PATH_RE.findall(svg) if 'stroke-dasharray' in path]
        self.assertEqual(len(dashed), 1)
        x1, y1, x2, y2 = (float(v) for v in SEGMENT_RE.search(dashed[0]).groups())
        self.assertAlmostEqual(y1, plot_services.BOTTOM + plot_services.PLOT_H * 0.4)
        self.assertAlmostEqual(y1, y2)
        self.assertAlmostEqual(x2 - x1, plot_services.PLOT_W)
        self.assertIn('random init (0.40)', svg)
        self.assertFalse(any('stroke-dasharray' in p for p in POLYLINE_RE.findall(svg)))

    def test_random_init_out_of_range(self):
        with self.assertRaises(InputError):
            plot_services.trajectory_svg([make_record(0)], random_fe=1.5)

    def test_eval_records_are_not_plotted(self):
        with self.assertRaises(MissingArtifactError):
            plot_services.trajectory_svg([make_record(1, kind='eval')])

    def test_empty(self):
        with self.assertRaises(MissingArtifactError):
            plot_services.trajectory_svg([])


class ContinualPlotTests(SimpleTestCase):

    def setUp(self):
        self.records = [make_record(1, kind='continual', subtask=k, forget=0.2 + 0.1 * k, retain=0.8 - 0.1 * k)
                        for k in range(3)]

    def test_one_point_per_subtask(self):
        svg = plot_services.continual_svg(self.records)
        # MU + R y ES de retain por subtarea, leyenda, clave de MU y de retain
        self.assertEqual(len(RADIUS_RE.findall(svg)), 3 + 6 + 1 + 2)
        self.assertIn('Subtask', svg)

    def test_two_panels(self):
        svg = plot_services.continual_svg(self.records)
        self.assertIn('MU / FE', svg)
        self.assertIn('ROUGE / ES', svg)

    def test_fe_and_es_series_are_dashed(self):
        polylines = POLYLINE_RE.findall(plot_services.continual_svg(self.records))
        # MU y FE arriba; R y ES de forget y retain abajo
        self.assertEqual(len(polylines), 6)
        self.assertEqual(sum('stroke-dasharray' in p for p in polylines), 3)

    def test_world_series_use_triangles(self):
        self.assertEqual(plot_services.continual_svg(self.records).count('<polygon'), 1)
        records = [replace(r, report=make_record(1, world=0.5).report) for r in self.records]
        svg = plot_services.continual_svg(records)
        self.assertEqual(svg.count('<polygon'), 3 * 2 + 1)
        self.assertEqual(len(POLYLINE_RE.findall(svg)), 8)

    def test_empty(self):
        with self.assertRaises(MissingArtifactError):
            plot_services.continual_svg([make_record(1)])


class TableTests(SimpleTestCase):

    def test_csv(self):
        records = [make_record(1, forget=0.5, retain=0.5), make_record(2, forget=0.1, retain=0.7)]
        lines = plot_services.table_csv(records).splitlines()
        self.assertEqual(lines[0], 'method,MU,FE,Avg')
        self.assertEqual(lines[1], 'ME+GD,0.7000,0.9000,0.8000')
        self.assertEqual(len(lines), 2)

    def test_rows_cover_both_kinds(self):
        records = [make_record(1), make_record(1, kind='continual', subtask=0, method='NPO+KL', config_hash='c1')]
        self.assertEqual([row[0] for row in plot_services.table_rows(records)], ['ME+GD', 'NPO+KL'])

    def test_pdf_is_reproducible(self):
        records = [make_record(1), make_record(1, method='IDK+AP', config_hash='run2')]
        first = plot_services.table_pdf(records)
        self.assertTrue(first.startswith(b'%PDF'))
        self.assertEqual(first, plot_services.table_pdf(records))

    def test_empty(self):
        with self.assertRaises(MissingArtifactError):
            plot_services.table_csv([])
