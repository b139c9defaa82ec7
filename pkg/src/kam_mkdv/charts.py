#!/usr/bin/env python3
"""
Chart generator for run artifacts.

Renders residual histories, Floquet spectra, excluded-fraction sweeps and
torus defects with matplotlib (non-GUI backend) as PNG bytes or files.
"""

import io
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use('Agg')  # Use non-GUI backend
import matplotlib.pyplot as plt
import numpy as np

logger = logging.getLogger(__name__)


class ChartGenerator:
    """Generate charts for solver runs"""

    COLORS = ['#0288d1', '#d32f2f', '#388e3c', '#f57c00', '#7b1fa2']

    def __init__(self, dpi: int = 100, figsize: Tuple[int, int] = (8, 5)):
        """
        Initialize chart generator.

        Args:
            dpi: Dots per inch for resolution
            figsize: Figure size as (width, height) in inches
        """
        self.logger = logging.getLogger(__name__)
        self.dpi = dpi
        self.figsize = figsize

    def residual_history(self, residuals: Sequence[float], scales: Optional[Sequence[float]] = None) -> bytes:
        """Semilog plot of ||F(U_n)||_s0 against the step n."""
        values = [r for r in residuals if r > 0]
        if not values:
            return self._empty_chart_placeholder("No residuals to display")
        fig, ax = plt.subplots(figsize=self.figsize, dpi=self.dpi)
        ax.semilogy(range(len(values)), values, "o-", color=self.COLORS[0], label="||F||_s0")
        if scales:
            twin = ax.twinx()
            twin.plot(range(len(scales)), scales, "s--", color=self.COLORS[3], label="N_n")
            twin.set_ylabel("N_n")
        ax.set_xlabel("step n")
        ax.set_ylabel("residual")
        ax.set_title("Nash-Moser residual")
        ax.grid(True, which="both", alpha=0.3)
        return self._to_png(fig)

    def floquet_spectrum(self, modes: Sequence[int], mu: Sequence[complex], m3: float, m1: float) -> bytes:
        """Im mu_j against j with the fitted dispersion i(-m3 j^3 + m1 j)."""
        modes = np.asarray(modes, dtype=float)
        if not modes.size:
            return self._empty_chart_placeholder("No eigenvalues to display")
        mu = np.asarray(mu)
        fig, (top, bottom) = plt.subplots(2, 1, figsize=self.figsize, dpi=self.dpi, sharex=True)
        top.plot(modes, mu.imag, "o", color=self.COLORS[0], label="Im mu_j")
        grid = np.linspace(modes.min(), modes.max(), 400)
        top.plot(grid, -m3 * grid ** 3 + m1 * grid, "-", color=self.COLORS[1], label="fit")
        top.legend()
        bottom.semilogy(modes, np.abs(mu.imag - (-m3 * modes ** 3 + m1 * modes)) + 1e-300, "o",
                        color=self.COLORS[2])
        bottom.set_xlabel("j")
        bottom.set_ylabel("|r_j|")
        top.set_title("Floquet exponents")
        return self._to_png(fig)

    def excluded_fraction(self, gammas: Sequence[float], fractions: Sequence[float],
                          slope: Optional[float] = None) -> bytes:
        """Log-log plot of the excluded fraction against gamma."""
        pts = [(g, f) for g, f in zip(gammas, fractions) if g > 0 and f > 0]
        if not pts:
            return self._empty_chart_placeholder("No excluded frequencies")
        g, f = np.array(pts).T
        fig, ax = plt.subplots(figsize=self.figsize, dpi=self.dpi)
        ax.loglog(g, f, "o-", color=self.COLORS[0])
        title = "Excluded fraction"
        if slope is not None:
            title += f" (slope {slope:.2f})"
        ax.set_title(title)
        ax.set_xlabel("gamma")
        ax.set_ylabel("fraction")
        ax.grid(True, which="both", alpha=0.3)
        return self._to_png(fig)

    def torus_defect(self, times: Sequence[float], series: Dict[str, List[float]]) -> bytes:
        """Distance of the integrated solution to the torus over time."""
        if not len(times):
            return self._empty_chart_placeholder("No trajectory to display")
        fig, ax = plt.subplots(figsize=self.figsize, dpi=self.dpi)
        for color, (name, values) in zip(self.COLORS, series.items()):
            ax.semilogy(times, np.asarray(values) + 1e-300, "-", color=color, label=name)
        ax.set_xlabel("t")
        ax.legend()
        ax.set_title("Torus defect")
        return self._to_png(fig)

    def save(self, png: bytes, output_path: str) -> str:
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(png)
        self.logger.info(f"chart written: {output_path}")
        return output_path

    def _to_png(self, fig) -> bytes:
        buf = io.BytesIO()
        fig.savefig(buf, format='png', dpi=self.dpi, bbox_inches='tight')
        buf.seek(0)
        plt.close(fig)
        return buf.getvalue()

    def _empty_chart_placeholder(self, message: str) -> bytes:
        """Create a placeholder chart with message"""
        fig, ax = plt.subplots(figsize=self.figsize, dpi=self.dpi)
        ax.text(0.5, 0.5, message, ha='center', va='center', fontsize=14, color='gray')
        ax.axis('off')
        return self._to_png(fig)
