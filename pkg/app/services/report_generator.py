import logging
from pathlib import Path
from typing import Any, Dict, List

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from exceptions.exceptions import OutputWriteException
from services.serialization import RunManifest

logger = logging.getLogger(__name__)


class ReportGenerator:
    """
    One-page PDF summary of a run: parameters, fit results and output files.
    Built in reportlab's invariant mode, with no timestamps, so identical runs
    give identical bytes.
    """

    def generate(self, manifest: RunManifest, summary: Dict[str, Any], path: Path) -> Path:
        path = Path(path)
        try:
            self._create_pdf(manifest, summary, path)
        except OSError as e:
            path.unlink(missing_ok=True)
            raise OutputWriteException(str(path), e.strerror or str(e)) from e
        logger.info("Report written to %s", path)
        return path

    def _create_pdf(self, manifest: RunManifest, summary: Dict[str, Any], path: Path) -> None:
        doc = SimpleDocTemplate(
            str(path),
            pagesize=A4,
            topMargin=0.75*inch,
            bottomMargin=0.75*inch,
            leftMargin=0.75*inch,
            rightMargin=0.75*inch,
            invariant=1,
            title=f"ghostsim {manifest.command}",
        )
        story = []
        styles = getSampleStyleSheet()

        title_style = ParagraphStyle(
            'ReportTitle',
            parent=styles['Heading1'],
            fontSize=22,
            textColor=colors.HexColor('#1a1a1a'),
            spaceAfter=8,
            alignment=TA_CENTER,
            fontName='Helvetica-Bold'
        )

        subtitle_style = ParagraphStyle(
            'Subtitle',
            parent=styles['Normal'],
            fontSize=10,
            textColor=colors.HexColor('#666666'),
            alignment=TA_CENTER,
            spaceAfter=20
        )

        heading_style = ParagraphStyle(
            'SectionHeading',
            parent=styles['Heading2'],
            fontSize=14,
            textColor=colors.HexColor('#2C3E50'),
            spaceAfter=10,
            spaceBefore=16,
            fontName='Helvetica-Bold'
        )

        story.append(Paragraph(f"Correlation run: {manifest.command.replace('_', ' ')}", title_style))
        story.append(Paragraph(
            f"version {manifest.version} · seed {manifest.seed} · {manifest.workers} worker(s)",
            subtitle_style
        ))

        story.append(Paragraph("Parameters", heading_style))
        story.append(self._key_value_table(self._flatten(manifest.config)))

        fits = summary.get("fits", [])
        if fits:
            story.append(Paragraph("Fits", heading_style))
            story.append(self._fit_table(fits))

        extra = {k: v for k, v in summary.items() if k not in ("fits", "outputs")}
        if extra:
            story.append(Paragraph("Results", heading_style))
            story.append(self._key_value_table(self._flatten(extra)))

        outputs = summary.get("outputs", [])
        if outputs:
            story.append(Paragraph("Outputs", heading_style))
            story.append(Spacer(1, 0.05 * inch))
            rows = [['File', 'Kind']] + [[name, self._get_kind_label(name)] for name in outputs]
            story.append(self._styled_table(rows, [4.2*inch, 1.8*inch], header=True))

        doc.build(story)

    def _fit_table(self, fits: List[Dict[str, Any]]) -> Table:
        rows = [['Profile', 'Model', 'FWHM / separation (mm)', 'RMS', 'Converged']]
        for fit in fits:
            value = fit.get("separation_m", fit.get("fwhm_m"))
            if isinstance(value, list):
                value = None
            error = fit.get("separation_stderr_m")
            shown = "-" if value is None else f"{value * 1e3:.4f}"
            if error is not None:
                shown += f" ± {error * 1e3:.4f}"
            rows.append([fit["profile"], fit["model"], shown, f"{fit['residual_rms']:.3g}",
                         "Yes" if fit["converged"] else "No"])
        table = self._styled_table(rows, [1.6*inch, 1.3*inch, 1.8*inch, 0.7*inch, 0.8*inch], header=True)
        for row, fit in enumerate(fits, 1):
            table.setStyle(TableStyle([
                ('TEXTCOLOR', (4, row), (4, row), self._get_status_color(fit["converged"])),
            ]))
        return table

    def _key_value_table(self, items: Dict[str, Any]) -> Table:
        rows = [[key, self._format_value(value)] for key, value in items.items()]
        return self._styled_table(rows, [2.5*inch, 3.5*inch], header=False)

    def _styled_table(self, rows: List[List[str]], widths: List[float], header: bool) -> Table:
        table = Table(rows, colWidths=widths)
        style = [
            ('FONTSIZE', (0, 0), (-1, -1), 9),
            ('TOPPADDING', (0, 0), (-1, -1), 5),
            ('BOTTOMPADDING', (0, 0), (-1, -1), 5),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.HexColor('#dee2e6')),
            ('VALIGN', (0, 0), (-1, -1), 'TOP'),
        ]
        if header:
            style += [
                ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#2C3E50')),
                ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
                ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
                ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor('#f8f9fa')]),
            ]
        else:
            style.append(('BACKGROUND', (0, 0), (0, -1), colors.HexColor('#f8f9fa')))
        table.setStyle(TableStyle(style))
        return table

    @staticmethod
    def _flatten(values: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
        flat = {}
        for key, value in values.items():
            name = f"{prefix}{key}"
            if isinstance(value, dict):
                flat.update(ReportGenerator._flatten(value, f"{name}."))
            else:
                flat[name] = value
        return flat

    @staticmethod
    def _format_value(value: Any) -> str:
        if isinstance(value, bool):
            return "Yes" if value else "No"
        if isinstance(value, float):
            return f"{value:.6g}"
        if isinstance(value, (list, tuple)):
            return ", ".join(ReportGenerator._format_value(v) for v in value) or "None"
        return "None" if value is None else str(value)

    def _get_status_color(self, converged: bool) -> colors.Color:
        return colors.HexColor('#28a745') if converged else colors.HexColor('#dc3545')

    def _get_kind_label(self, name: str) -> str:
        if name.endswith(".csv"):
            return "table"
        elif name.endswith(".pgm"):
            return "image"
        elif name.endswith(".json"):
            return "metadata"
        else:
            return "other"
