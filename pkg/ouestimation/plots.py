"""
Static chart of the optimal average MMSE against beta.
"""

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

SCHEME_COLORS = {'IIR': 'tab:blue', 'FR': 'tab:red'}
DASHED_EPSILON = 0.4


def plot_beta_sweep(curves: pd.DataFrame, filepath: str, title: str = '') -> None:
    """
    Save an SVG with one line per (scheme, epsilon): lambda* against beta.

    Lines for epsilon=0.4 are dashed and all others solid. The file has
    no timestamp and fixed element ids, so equal inputs give equal files.

    Args:
        curves: Output of experiments.curve_frame().
        filepath: Destination '.svg' file.
        title: Optional chart title.
    """
    if curves.empty:
        raise ValueError('No curve data to plot')
    with plt.rc_context({'svg.hashsalt': 'ouestimation', 'svg.fonttype': 'none'}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for (scheme, eps), curve in curves.groupby(['scheme', 'epsilon'], sort=True):
            style = '--' if np.isclose(eps, DASHED_EPSILON) else '-'
            ax.plot(curve['beta'], curve['lambda_star'], style, marker='.',
                    color=SCHEME_COLORS.get(scheme), label=f'{scheme}, $\\epsilon$={eps:g}')
        ax.set_xlabel(r'$\beta$ (time units)')
        ax.set_ylabel('Long-term average MMSE')
        if title:
            ax.set_title(title)
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(filepath, format='svg', metadata={'Date': None})
        plt.close(fig)
