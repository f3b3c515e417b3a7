"""
Reporting module for Simlab
Writes study tables as CSV and renders them into a single HTML summary
"""

import logging
import math
import os
from typing import Dict

import pandas as pd

logger = logging.getLogger(__name__)

# 17 significant digits round-trip every double exactly
FLOAT_FORMAT = "%.17g"


def write_table(frame: pd.DataFrame, output_path: str) -> str:
    """Write a table as CSV with exact float text and LF line endings"""
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(output_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="")
    logger.info("Table saved to %s", output_path)
    return output_path


def _cell(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "N/A"
        return f"{value:.4f}"
    return str(value)


def _html_table(frame: pd.DataFrame) -> str:
    header = "".join(f"<th>{column}</th>" for column in frame.columns)
    rows = []
    for record in frame.itertuples(index=False):
        cells = "".join(f'<td class="metric-value">{_cell(v)}</td>' for v in record)
        rows.append(f"<tr>{cells}</tr>")
    return f"<table>\n<tr>{header}</tr>\n" + "\n".join(rows) + "\n</table>"


def create_study_report(tables: Dict[str, pd.DataFrame], output_path: str = "output/report.html") -> str:
    """Create an HTML report of the study tables"""
    html = """<!DOCTYPE html>
<html>
<head>
    <title>Simlab Study Report</title>
    <style>
        body { font-family: Arial, sans-serif; margin: 20px; }
        h1 { color: #333; }
        h2 { color: #555; margin-top: 30px; }
        table { border-collapse: collapse; width: 100%; }
        th, td { border: 1px solid #ddd; padding: 8px; text-align: left; }
        th { background-color: #f2f2f2; }
        tr:nth-child(even) { background-color: #f9f9f9; }
        .metric-value { font-weight: bold; }
    </style>
</head>
<body>
    <h1>Simlab Study Report</h1>
"""
    titles = {
        "coverage": "Coverage of the true value by the jackknife confidence interval",
        "power": "Power of the jackknife Z-test of PMM against ZOM",
        "normality": "Shapiro-Wilk test of the centred statistic T0",
    }
    for name, frame in tables.items():
        html += f"    <h2>{titles.get(name, name.title())}</h2>\n"
        html += _html_table(frame) + "\n"

    html += """</body>
</html>
"""

    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(html)

    logger.info("HTML report generated at %s", output_path)
    return output_path
