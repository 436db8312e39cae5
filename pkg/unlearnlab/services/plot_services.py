import csv
import io
import logging
from collections import OrderedDict
from typing import List, Optional, Sequence, Tuple

from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Circle, Drawing, Line, Polygon, PolyLine, Rect, String
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from unlearnlab.services.errors import InputError, MissingArtifactError
from unlearnlab.services.unlearn import RunRecord

"""
Gráficos SVG (trayectorias MU-FE y métricas por subtarea) y tabla de resultados (CSV y PDF).
La salida es determinista para un mismo log.
"""
logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 520, 400
LEFT, BOTTOM, PLOT_W, PLOT_H = 60, 50, 320, 300
UPPER_BOTTOM = BOTTOM + PLOT_H + 70
CONTINUAL_HEIGHT = UPPER_BOTTOM + PLOT_H + 30
DASH = (4, 3)
SET_MARKERS = (('forget', 'square'), ('retain', 'circle'), ('world', 'triangle'))
PALETTE = (
    colors.HexColor('#1f77b4'), colors.HexColor('#d62728'), colors.HexColor('#2ca02c'),
    colors.HexColor('#9467bd'), colors.HexColor('#ff7f0e'), colors.HexColor('#8c564b'),
    colors.HexColor('#e377c2'), colors.HexColor('#7f7f7f'), colors.HexColor('#bcbd22'),
    colors.HexColor('#17becf'), colors.HexColor('#393b79'),
)
TABLE_HEADER = ['method', 'MU', 'FE', 'Avg']


def marker_radius(epoch: int) -> float:
    return 2.0 + 2.0 * epoch


def group_series(records: Sequence[RunRecord], kind: str) -> "OrderedDict[str, List[RunRecord]]":
    """
    Agrupa por ejecución (hash de configuración) en orden de primera aparición.
    La etiqueta es el método; si dos ejecuciones comparten método se añade el hash.
    """
    groups: "OrderedDict[str, List[RunRecord]]" = OrderedDict()
    for record in records:
        if record.kind == kind:
            groups.setdefault(record.config_hash, []).append(record)

    methods = [rs[0].method for rs in groups.values()]
    labelled = OrderedDict()
    for run_hash, series in groups.items():
        label = series[0].method
        if methods.count(label) > 1:
            label = f'{label} ({run_hash})'
        labelled[label] = sorted(series, key=lambda r: (r.subtask or 0, r.epoch))
    return labelled


def _to_xy(x: float, y: float, x_max: float = 1.0, bottom: float = BOTTOM) -> Tuple[float, float]:
    return LEFT + PLOT_W * (x / x_max if x_max else 0.0), bottom + PLOT_H * y


def _axes(drawing: Drawing, x_label: str, y_label: str, x_ticks: Sequence[Tuple[float, str]],
          bottom: float = BOTTOM):
    drawing.add(Line(LEFT, bottom, LEFT + PLOT_W, bottom, strokeColor=colors.black))
    drawing.add(Line(LEFT, bottom, LEFT, bottom + PLOT_H, strokeColor=colors.black))
    for fraction, text in x_ticks:
        x = LEFT + PLOT_W * fraction
        drawing.add(Line(x, bottom, x, bottom - 4, strokeColor=colors.black))
        drawing.add(String(x, bottom - 16, text, fontSize=8, textAnchor='middle'))
    for i in range(6):
        y = bottom + PLOT_H * i / 5
        drawing.add(Line(LEFT - 4, y, LEFT, y, strokeColor=colors.black))
        drawing.add(String(LEFT - 8, y - 3, f'{i / 5:.1f}', fontSize=8, textAnchor='end'))
    drawing.add(String(LEFT + PLOT_W / 2, bottom - 34, x_label, fontSize=10, textAnchor='middle'))
    drawing.add(String(18, bottom + PLOT_H / 2, y_label, fontSize=10, textAnchor='middle'))


def _legend(drawing: Drawing, labels: Sequence[str], bottom: float = BOTTOM):
    x = LEFT + PLOT_W + 20
    for i, label in enumerate(labels):
        y = bottom + PLOT_H - 14 * i
        color = PALETTE[i % len(PALETTE)]
        drawing.add(Circle(x, y + 3, 4, fillColor=color, strokeColor=color))
        drawing.add(String(x + 10, y, label, fontSize=8))


def _marker(shape: str, x: float, y: float, color, size: float = 3.0):
    if shape == 'square':
        return Rect(x - size, y - size, 2 * size, 2 * size, fillColor=color, strokeColor=color)
    if shape == 'triangle':
        return Polygon([x - size, y - size, x + size, y - size, x, y + size], fillColor=color, strokeColor=color)
    return Circle(x, y, size, fillColor=color, strokeColor=color)


class _Canvas:
    """
    Acumula las figuras de un Drawing dejando las discontinuas para el final:
    renderSVG no limpia stroke-dasharray una vez fijado.
    """

    def __init__(self, drawing: Drawing):
        self.drawing = drawing
        self.dashed: list = []

    def series(self, coords: Sequence[Tuple[float, float]], color, dashed: bool, shape: str):
        if len(coords) > 1:
            flat = [c for xy in coords for c in xy]
            if dashed:
                self.dashed.append(PolyLine(flat, strokeColor=color, strokeWidth=1.5, strokeDashArray=DASH))
            else:
                self.drawing.add(PolyLine(flat, strokeColor=color, strokeWidth=1.5))
        for x, y in coords:
            self.drawing.add(_marker(shape, x, y, color))

    def key(self, entries: Sequence[Tuple[str, Optional[bool], Optional[str]]], bottom: float):
        """Clave de estilos: (etiqueta, discontinua o None sin trazo, marcador o None)."""
        x = LEFT + PLOT_W + 20
        for i, (label, dashed, shape) in enumerate(entries):
            y = bottom + 14 * (len(entries) - 1 - i) + 4
            if dashed is not None:
                line = Line(x - 6, y + 3, x + 6, y + 3, strokeColor=colors.black)
                if dashed:
                    line.strokeDashArray = DASH
                    self.dashed.append(line)
                else:
                    self.drawing.add(line)
            if shape:
                self.drawing.add(_marker(shape, x, y + 3, colors.black, size=2.5))
            self.drawing.add(String(x + 12, y, label, fontSize=8))

    def render(self) -> str:
        for shape in self.dashed:
            self.drawing.add(shape)
        return renderSVG.drawToString(self.drawing)


def trajectory_svg(records: Sequence[RunRecord], random_fe: Optional[float] = None) -> str:
    """
    Un marcador por (método, época) en (MU, FE); el radio crece con la época.
    :param records: registros del log de resultados
    :param random_fe: FE de un modelo recién inicializado; se dibuja como línea horizontal discontinua
    :return: documento SVG
    """
    series = group_series(records, 'unlearn')
    if not series:
        raise MissingArtifactError('El log no tiene registros de desaprendizaje.')
    if random_fe is not None and not 0.0 <= random_fe <= 1.0:
        raise InputError(f'random_fe fuera de [0, 1]: {random_fe}.')

    canvas = _Canvas(Drawing(WIDTH, HEIGHT))
    ticks = [(i / 5, f'{i / 5:.1f}') for i in range(6)]
    _axes(canvas.drawing, 'Model Utility (MU)', 'FE', ticks)
    for i, (label, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = [_to_xy(r.report.MU, r.report.FE) for r in points]
        if len(coords) > 1:
            flat = [c for xy in coords for c in xy]
            canvas.drawing.add(PolyLine(flat, strokeColor=color, strokeWidth=1))
        for (x, y), record in zip(coords, points):
            canvas.drawing.add(Circle(x, y, marker_radius(record.epoch), fillColor=color,
                                      strokeColor=colors.white, fillOpacity=0.7))
    _legend(canvas.drawing, list(series))
    if random_fe is not None:
        _, y = _to_xy(0.0, random_fe)
        canvas.drawing.add(String(LEFT + PLOT_W - 2, y + 4, f'random init ({random_fe:.2f})', fontSize=7,
                                  textAnchor='end', fillColor=colors.grey))
        canvas.dashed.append(Line(LEFT, y, LEFT + PLOT_W, y, strokeColor=colors.grey, strokeWidth=1,
                                  strokeDashArray=DASH))
    return canvas.render()


def continual_svg(records: Sequence[RunRecord]) -> str:
    """
    Dos paneles por subtarea, una serie por método.
    Arriba MU (continua, círculos) y FE (discontinua, cuadrados).
    Abajo ROUGE (continua) y ES (discontinua) de cada conjunto; el marcador indica el conjunto.
    """
    series = group_series(records, 'continual')
    if not series:
        raise MissingArtifactError('El log no tiene registros continuos.')

    n_subtasks = max(r.subtask or 0 for points in series.values() for r in points) + 1
    x_max = max(n_subtasks - 1, 1)
    canvas = _Canvas(Drawing(WIDTH, CONTINUAL_HEIGHT))
    ticks = [(k / x_max, str(k + 1)) for k in range(n_subtasks)]
    _axes(canvas.drawing, 'Subtask', 'MU / FE', ticks, bottom=UPPER_BOTTOM)
    _axes(canvas.drawing, 'Subtask', 'ROUGE / ES', ticks)

    for i, points in enumerate(series.values()):
        color = PALETTE[i % len(PALETTE)]
        canvas.series([_to_xy(r.subtask or 0, r.report.MU, x_max, UPPER_BOTTOM) for r in points],
                      color, False, 'circle')
        canvas.series([_to_xy(r.subtask or 0, r.report.FE, x_max, UPPER_BOTTOM) for r in points],
                      color, True, 'square')
        for set_name, shape in SET_MARKERS:
            present = [r for r in points if set_name in r.report.sets]
            for key, dashed in (('R', False), ('ES', True)):
                coords = [_to_xy(r.subtask or 0, getattr(r.report.sets[set_name], key), x_max) for r in present]
                canvas.series(coords, color, dashed, shape)

    _legend(canvas.drawing, list(series), bottom=UPPER_BOTTOM)
    canvas.key([('MU', False, 'circle'), ('FE', True, 'square')], UPPER_BOTTOM)
    canvas.key([('ROUGE', False, None), ('ES', True, None)]
               + [(name, None, shape) for name, shape in SET_MARKERS], BOTTOM)
    return canvas.render()


def table_rows(records: Sequence[RunRecord]) -> List[List[str]]:
    """
    Una fila por ejecución con el último registro (época o subtarea final).
    Avg = (MU + FE) / 2.
    """
    if not records:
        raise MissingArtifactError('El log de resultados está vacío.')
    rows = []
    for kind in ('unlearn', 'continual'):
        for label, points in group_series(records, kind).items():
            final = points[-1]
            mu, fe = final.report.MU, final.report.FE
            rows.append([label, f'{mu:.4f}', f'{fe:.4f}', f'{(mu + fe) / 2:.4f}'])
    return rows


def table_csv(records: Sequence[RunRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(TABLE_HEADER)
    writer.writerows(table_rows(records))
    return buffer.getvalue()


def _build_table_results(rows: Sequence[Sequence[str]]) -> Table:
    """
    Construye una tabla de ReportLab con las filas de resultados.
    :param rows: filas [método, MU, FE, Avg]
    :return: Table de ReportLab
    """
    data = [TABLE_HEADER] + [list(r) for r in rows]
    table = Table(data, colWidths=[3.0 * inch, 1.2 * inch, 1.2 * inch, 1.2 * inch])
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.darkblue),
        ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('ALIGN', (1, 1), (-1, -1), 'RIGHT'),
        ('GRID', (0, 0), (-1, -1), 0.25, colors.grey),
        ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.whitesmoke, colors.lightgrey]),
        ('VALIGN', (0, 0), (-1, -1), 'MIDDLE'),
    ]))
    return table


def table_pdf(records: Sequence[RunRecord], title: str = 'Resultados de desaprendizaje') -> bytes:
    """
    Tabla de resultados en PDF (invariante: mismos bytes para el mismo log).
    :return: bytes del PDF
    """
    rows = table_rows(records)
    buffer = io.BytesIO()
    doc = SimpleDocTemplate(
        buffer, pagesize=A4, invariant=1,
        topMargin=0.5 * inch, bottomMargin=0.5 * inch,
        leftMargin=0.5 * inch, rightMargin=0.5 * inch,
    )
    styles = getSampleStyleSheet()
    title_style = ParagraphStyle(
        'CustomTitle', parent=styles['Heading1'],
        fontSize=18, spaceAfter=20, alignment=1, textColor=colors.darkblue,
    )
    doc.build([Paragraph(title, title_style), Spacer(1, 12), _build_table_results(rows)])
    pdf_bytes = buffer.getvalue()
    logger.info('PDF generado: %d bytes, %d fila(s)', len(pdf_bytes), len(rows))
    return pdf_bytes

