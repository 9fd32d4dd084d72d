"""Inter-change times of timestamped property histories and their density."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ContractError
from .model import PairState, Snapshot, project

log = logging.getLogger(__name__)

GRID_POINTS = 1024
GRID_PAD = 4.0


def inter_change_times(state: PairState) -> list:
    """Gaps in years between consecutive valid times, ascending; zero gaps are dropped."""
    times = sorted(r.valid_time for r in state.records if r.valid_time is not None)
    years = [t.year_fraction() for t in times]
    gaps = [b - a for a, b in zip(years, years[1:])]
    out = [g for g in gaps if g > 0]
    if len(out) != len(gaps):
        log.warning(
            "dropped %d zero inter-change gap(s) for (%s, %s)",
            len(gaps) - len(out), state.subject, state.property,
        )
    return out


def pool(entities, property: str, snapshot: Snapshot) -> list:
    """Inter-change times of ``property`` over all entities, in entity order."""
    samples = []
    for e in entities:
        samples.extend(inter_change_times(project(snapshot, e, property)))
    return samples


def silverman_bandwidth(samples) -> float:
    """``0.9 * min(sd, IQR/1.34) * n^(-1/5)``, falling back to sd when IQR is 0 and to 1 when sd is 0."""
    x = np.asarray(samples, dtype=np.float64)
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if sd == 0.0:
        return 1.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2)


@dataclass(frozen=True)
class DensityEstimate:
    samples: np.ndarray
    bandwidth: float
    kernel: str
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    grid: np.ndarray = field(repr=False)
    grid_density: np.ndarray = field(repr=False)
    grid_cdf: np.ndarray = field(repr=False)

    def pdf(self, x):
        """Density at scalar or array ``x``."""
        pts = np.atleast_1d(np.asarray(x, dtype=np.float64))
        vals = _kernels.gaussian_kde_sum(self.samples, pts, self.bandwidth)
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def cdf(self, x):
        """Trapezoid-integrated CDF on the grid, linearly interpolated (0 left, 1 right)."""
        vals = np.interp(np.asarray(x, dtype=np.float64), self.grid, self.grid_cdf, left=0.0, right=1.0)
        return float(vals) if np.ndim(x) == 0 else vals

    def integral(self) -> float:
        return float(self.grid_cdf[-1])


def kde(samples, bandwidth=None, bins: int = 50) -> DensityEstimate:
    """Gaussian KDE with a histogram of the same samples."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ContractError(f"kde needs at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ContractError("samples must be finite")
    if bandwidth is None:
        h = silverman_bandwidth(x)
    else:
        h = float(bandwidth)
        if not (h > 0 and math.isfinite(h)):
            raise ContractError(f"bandwidth must be positive, got {bandwidth}")
    if bins < 1:
        raise ContractError("bins must be at least 1")
    counts, edges = np.histogram(x, bins=bins)
    grid = np.linspace(x.min() - GRID_PAD * h, x.max() + GRID_PAD * h, GRID_POINTS)
    dens = _kernels.gaussian_kde_sum(x, grid, h)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    for arr in (x, counts, edges, grid, dens, cdf):
        arr.setflags(write=False)
    return DensityEstimate(x, h, "gaussian", edges, counts, grid, dens, cdf)
