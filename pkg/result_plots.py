#!/usr/bin/env python3
"""
Result Plots
SVG figures from evaluation and training CSVs: prediction error against total
demand (one series per method) and training/validation loss curves.
Output bytes depend only on the input data.
"""

import logging
from typing import List, Sequence

import numpy as np
import pandas as pd
import matplotlib as mpl
mpl.use('Agg')
import matplotlib.pyplot as plt

logger = logging.getLogger(__name__)

ERROR_FLOOR = 1e-12
METHOD_STYLE = {
    'dcopf': {'color': '#7f7f7f', 'marker': 's', 'label': 'DC-OPF'},
    'proxy': {'color': '#1f77b4', 'marker': '^', 'label': 'Proxy'},
    'dc2ac': {'color': '#d62728', 'marker': 'o', 'label': 'DC2AC'},
}

plot_settings = {
    'svg.hashsalt': 'dc2ac',
    'svg.fonttype': 'none',
    'font.family': 'sans-serif',
    'font.size': 9,
    'axes.labelsize': 9,
    'legend.fontsize': 8,
    'xtick.labelsize': 8,
    'ytick.labelsize': 8,
    'figure.figsize': (5.0, 3.2),
}


class PlotInputError(ValueError):
    """CSV input is empty or lacks the columns a figure needs."""


def _read(path: str, required: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise PlotInputError(f"{path}: empty CSV")
    except pd.errors.ParserError as e:
        raise PlotInputError(f"{path}: malformed CSV: {e}")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise PlotInputError(f"{path}: missing columns {', '.join(missing)}")
    if frame.empty:
        raise PlotInputError(f"{path}: no data rows")
    return frame


def _style(method: str, index: int):
    if method in METHOD_STYLE:
        return METHOD_STYLE[method]
    return {'color': f'C{index}', 'marker': 'x', 'label': method}


def _save(fig, out_path: str) -> str:
    fig.savefig(out_path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.info(f"Figure written to {out_path}")
    return out_path


def plot_accuracy(metrics_csv: str, out_path: str, group: str = 'pg') -> str:
    """Log-scale scatter of per-sample L1 error against total demand."""
    column = f'l1_{group}'
    frame = _read(metrics_csv, ['method', 'total_pd', column])
    with mpl.rc_context(plot_settings):
        fig, ax = plt.subplots()
        for i, (method, rows) in enumerate(frame.groupby('method', sort=False)):
            style = _style(method, i)
            errors = np.maximum(rows[column].to_numpy(dtype=float), ERROR_FLOOR)
            ax.scatter(rows['total_pd'], errors, s=8, alpha=0.7, linewidths=0,
                       color=style['color'], marker=style['marker'], label=style['label'])
        ax.set_yscale('log')
        ax.set_xlabel('Total demand (p.u.)')
        ax.set_ylabel(f'L1 error in {group} (p.u.)')
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, out_path)


def plot_history(history_csvs: List[str], out_path: str) -> str:
    """Training (dashed) and validation (solid) loss per epoch, one colour per method."""
    frames = [_read(p, ['method', 'epoch', 'train_loss', 'val_loss']) for p in history_csvs]
    with mpl.rc_context(plot_settings):
        fig, ax = plt.subplots()
        for i, frame in enumerate(frames):
            method = str(frame['method'].iloc[0])
            style = _style(method, i)
            ax.plot(frame['epoch'], frame['train_loss'], linestyle='--', color=style['color'])
            ax.plot(frame['epoch'], frame['val_loss'], linestyle='-', color=style['color'],
                    label=style['label'])
        ax.set_yscale('log')
        ax.set_xlabel('Epoch')
        ax.set_ylabel('MSE loss')
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, out_path)


def plot_csv(paths: List[str], out_path: str, group: str = 'pg') -> str:
    """Pick the figure from the CSV columns: metrics rows carry total_pd, histories carry epoch."""
    try:
        header = pd.read_csv(paths[0], nrows=0).columns
    except pd.errors.EmptyDataError:
        raise PlotInputError(f"{paths[0]}: empty CSV")
    if 'total_pd' in header:
        if len(paths) != 1:
            raise PlotInputError("accuracy plots take a single metrics CSV")
        return plot_accuracy(paths[0], out_path, group)
    if 'epoch' in header:
        return plot_history(paths, out_path)
    raise PlotInputError(f"{paths[0]}: neither a metrics nor a history CSV")
