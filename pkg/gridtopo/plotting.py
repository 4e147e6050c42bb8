"""Figures of median MSE and F-score against SNR, one line per fitted model."""

from pathlib import Path

import plotly.express as px

from gridtopo.experiment import ExperimentReport
from gridtopo.utils import logger as _logger

logger = _logger.getChild('plotting')

FIGURES = {
    'mse': ('mse_b_median', 'mse_g_median', True),
    'fscore': ('fscore_b_median', 'fscore_g_median', False),
}


def render(report: ExperimentReport, out_dir: str | Path, svg: bool = True) -> list[Path]:
    """Writes <metric>.html (and <metric>.svg through kaleido); returns the paths"""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = report.aggregates
    written: list[Path] = []

    for name, (b_column, g_column, log_y) in FIGURES.items():
        frame = table.melt(
            id_vars=['variant', 'snr_db'],
            value_vars=[b_column, g_column],
            var_name='matrix',
            value_name=name,
        ).dropna(subset=[name])
        frame['matrix'] = frame['matrix'].map({b_column: 'B~', g_column: 'G'})

        fig = px.line(
            frame,
            x='snr_db',
            y=name,
            color='variant',
            line_dash='matrix',
            markers=True,
            log_y=log_y,
            labels={'snr_db': 'SNR [dB]', name: f'median {name}'},
        )
        html_path = out / f'{name}.html'
        fig.write_html(html_path)
        written.append(html_path)
        if svg:
            svg_path = out / f'{name}.svg'
            fig.write_image(svg_path, width=900, height=600)
            written.append(svg_path)

    logger.info(f'Wrote {len(written)} figure files to {out}')
    return written
