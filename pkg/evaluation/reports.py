"""
GroundKit Report Generator
Writes metric reports as JSON, a plain-text "mean(low,high)" table and an Excel workbook
"""

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from evaluation.stats import TrialComparison, format_cell

Range = Tuple[float, float, float]


@dataclass
class MetricReport:
    """
    Per-dataset metric ranges plus significance tests.

    datasets: dataset key ("Task/Modality") -> metric -> (mean, low, high)
    significance: "dataset:metric" -> comparison against a baseline
    per_class_dice: class label -> mean Dice
    """
    datasets: Dict[str, Dict[str, Range]] = field(default_factory=dict)
    significance: Dict[str, TrialComparison] = field(default_factory=dict)
    per_class_dice: Dict[str, float] = field(default_factory=dict)
    sample_counts: Dict[str, int] = field(default_factory=dict)
    n_trials: int = 1

    def __post_init__(self):
        for key, metrics in self.datasets.items():
            for metric, (mean, low, high) in metrics.items():
                if not low - 1e-12 <= mean <= high + 1e-12:
                    raise ValueError(f"{key}:{metric} range ({low}, {high}) does not contain mean {mean}")

    def metric_names(self) -> List[str]:
        return sorted({m for metrics in self.datasets.values() for m in metrics})

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "datasets": {
                key: {m: {"mean": r[0], "low": r[1], "high": r[2]} for m, r in sorted(metrics.items())}
                for key, metrics in sorted(self.datasets.items())
            },
            "per_class_dice": dict(sorted(self.per_class_dice.items())),
            "sample_counts": dict(sorted(self.sample_counts.items())),
            "significance": {k: asdict(v) for k, v in sorted(self.significance.items())},
        }


class ReportGenerator:
    """Generate JSON, text and Excel metric reports"""

    def __init__(self, output_dir: Optional[str] = None):
        """
        Initialize report generator

        Args:
            output_dir: Directory to save reports (default: ./reports)
        """
        if output_dir is None:
            output_dir = os.path.join(os.getcwd(), 'reports')
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)

    # ==================== JSON ====================

    def generate_json_report(self, report: MetricReport, output_filename: str = "metrics.json") -> str:
        """Write the report as sorted, indented JSON (byte-stable for identical reports)"""
        filepath = os.path.join(self.output_dir, output_filename)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return filepath

    # ==================== TEXT TABLE ====================

    def render_table(self, report: MetricReport, scale: float = 100.0, digits: int = 1) -> str:
        """
        Plain-text table, one row per dataset, cells "mean(low,high)" in percent.

        Comparison rows list baseline cell, effect size, improvement and p-value.
        """
        metrics = report.metric_names()
        header = ["Dataset"] + metrics
        rows = [header]
        for key in sorted(report.datasets):
            row = [key]
            for metric in metrics:
                value = report.datasets[key].get(metric)
                row.append("-" if value is None else format_cell(*(v * scale for v in value), digits=digits))
            rows.append(row)

        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]

        if report.significance:
            lines.append("")
            lines.append("Comparison | ours | baseline | effect | improvement | p")
            for key, comp in sorted(report.significance.items()):
                ours = format_cell(comp.mean * scale, comp.low * scale, comp.high * scale, digits)
                theirs = format_cell(comp.baseline_mean * scale, comp.baseline_low * scale,
                                     comp.baseline_high * scale, digits)
                lines.append(
                    f"{key} | {ours} | {theirs} | {comp.effect_size:.2f} | "
                    f"{comp.improvement * scale:+.{digits}f} | {comp.p:.3g}"
                )
        return "\n".join(lines) + "\n"

    def generate_text_report(self, report: MetricReport, output_filename: str = "metrics.txt") -> str:
        filepath = os.path.join(self.output_dir, output_filename)
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(self.render_table(report))
        return filepath

    # ==================== EXCEL ====================

    def generate_excel_report(self, report: MetricReport, output_filename: str = "metrics.xlsx") -> str:
        """
        Generate Excel metric report

        Sheets: Summary (one row per dataset), Per-Class Dice, Significance.

        Returns:
            Path to generated Excel file
        """
        filepath = os.path.join(self.output_dir, output_filename)
        wb = Workbook()

        # Styles
        header_font = Font(bold=True, color="FFFFFF")
        header_fill = PatternFill(start_color="1a4a7a", end_color="1a4a7a", fill_type="solid")
        center_align = Alignment(horizontal="center", vertical="center")
        thin_border = Border(
            left=Side(style='thin'),
            right=Side(style='thin'),
            top=Side(style='thin'),
            bottom=Side(style='thin')
        )

        def write_header(ws, headers, fill=header_fill):
            for col, header in enumerate(headers, 1):
                cell = ws.cell(row=1, column=col, value=header)
                cell.font = header_font
                cell.fill = fill
                cell.alignment = center_align
                cell.border = thin_border

        # === Sheet 1: Summary ===
        ws_summary = wb.active
        ws_summary.title = "Summary"
        metrics = report.metric_names()
        write_header(ws_summary, ["Dataset", "Samples"] + [f"{m} (mean,low,high)" for m in metrics])
        for i, key in enumerate(sorted(report.datasets), 2):
            ws_summary.cell(row=i, column=1, value=key)
            ws_summary.cell(row=i, column=2, value=report.sample_counts.get(key, 0))
            for j, metric in enumerate(metrics, 3):
                value = report.datasets[key].get(metric)
                ws_summary.cell(row=i, column=j, value="-" if value is None else format_cell(*(v * 100 for v in value)))

        # === Sheet 2: Per-class Dice ===
        ws_classes = wb.create_sheet("Per-Class Dice")
        write_header(ws_classes, ["Class", "Dice (%)"])
        for i, (label, dice) in enumerate(sorted(report.per_class_dice.items()), 2):
            ws_classes.cell(row=i, column=1, value=label)
            ws_classes.cell(row=i, column=2, value=round(dice * 100, 2))

        # === Sheet 3: Significance ===
        ws_sig = wb.create_sheet("Significance")
        write_header(ws_sig, ["Comparison", "Ours", "Baseline", "Effect size", "Improvement", "t", "p"],
                     fill=PatternFill(start_color="c0392b", end_color="c0392b", fill_type="solid"))
        for i, (key, comp) in enumerate(sorted(report.significance.items()), 2):
            for j, value in enumerate([key, comp.mean, comp.baseline_mean, comp.effect_size,
                                       comp.improvement, comp.t, comp.p], 1):
                ws_sig.cell(row=i, column=j, value=value)

        for ws in [ws_summary, ws_classes, ws_sig]:
            for col in range(1, max(ws.max_column, 2) + 1):
                ws.column_dimensions[get_column_letter(col)].width = 22

        wb.save(filepath)
        return filepath

    def generate_all(self, report: MetricReport) -> Dict[str, str]:
        return {
            "json": self.generate_json_report(report),
            "text": self.generate_text_report(report),
            "excel": self.generate_excel_report(report),
        }
