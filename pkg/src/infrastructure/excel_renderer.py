"""
Infrastructure Layer - Excel Renderer

Renders comparison tables (ablation variants, sweeps) to styled xlsx files
using XlsxWriter.
"""

from pathlib import Path

import pandas as pd
import xlsxwriter


class ExcelRenderer:
    """Renderer for comparison tables."""

    def __init__(self, output_dir: Path) -> None:
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def render(
        self,
        table: pd.DataFrame,
        filename: str,
        title: str = "",
        label_columns: int = 2,
        p_values: pd.DataFrame | None = None,
        alpha: float = 0.05,
    ) -> Path:
        """
        Render a table whose first ``label_columns`` columns are row labels.

        The best value of each row is bold; cells whose paired-test p-value
        (same shape as ``table``) is below ``alpha`` are shaded.

        Args:
            table: Labels followed by numeric variant columns
            filename: Base filename (without extension)
            title: Sheet title line
            label_columns: Number of leading label columns
            p_values: Optional p-values aligned with ``table``
            alpha: Significance threshold for shading

        Returns:
            Path to the generated file
        """
        file_path = self.output_dir / f"{filename}.xlsx"
        workbook = xlsxwriter.Workbook(str(file_path))
        worksheet = workbook.add_worksheet("Results")

        header_format = workbook.add_format(
            {
                "bold": True,
                "font_color": "white",
                "bg_color": "#2C3E50",
                "border": 1,
                "align": "center",
                "valign": "vcenter",
            }
        )
        label_format = workbook.add_format({"border": 1})
        number_format = workbook.add_format({"border": 1, "num_format": "0.0000"})
        best_format = workbook.add_format({"border": 1, "num_format": "0.0000", "bold": True})
        significant = {"bg_color": "#C6EFCE", "font_color": "#006100"}
        sig_format = workbook.add_format({"border": 1, "num_format": "0.0000", **significant})
        sig_best_format = workbook.add_format(
            {"border": 1, "num_format": "0.0000", "bold": True, **significant}
        )

        title_format = workbook.add_format({"bold": True, "font_size": 14})
        start_row = 0
        if title:
            worksheet.write(0, 0, title, title_format)
            start_row = 2

        columns = list(table.columns)
        for col_idx, name in enumerate(columns):
            worksheet.write(start_row, col_idx, str(name), header_format)

        value_columns = columns[label_columns:]
        for row_idx, (_, row) in enumerate(table.iterrows()):
            current_row = start_row + 1 + row_idx
            numeric = pd.to_numeric(row[value_columns], errors="coerce")
            best = numeric.max() if numeric.notna().any() else None
            for col_idx, name in enumerate(columns):
                value = row[name]
                if col_idx < label_columns:
                    worksheet.write(current_row, col_idx, str(value), label_format)
                    continue
                if pd.isna(value):
                    worksheet.write_blank(current_row, col_idx, None, label_format)
                    continue
                is_best = best is not None and value == best
                p = None if p_values is None else p_values.iloc[row_idx][name]
                is_sig = p is not None and not pd.isna(p) and p < alpha
                fmt = {
                    (False, False): number_format,
                    (True, False): best_format,
                    (False, True): sig_format,
                    (True, True): sig_best_format,
                }[(is_best, is_sig)]
                worksheet.write_number(current_row, col_idx, float(value), fmt)

        for col_idx, name in enumerate(columns):
            max_len = max([len(str(name)), *(len(str(v)) for v in table[name])])
            worksheet.set_column(col_idx, col_idx, min(max_len + 2, 40))

        workbook.close()
        return file_path
