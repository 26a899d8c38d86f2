"""Least-squares baseline estimator and the normalized error metric.

The baseline treats each surface element as if it had contributed its own
column of repeated pilot symbols to the burst.  All columns of that design
matrix are identical, so its rank is 1 for any number of elements and the
normal equations are singular; the estimator therefore returns the
minimum-norm least-squares solution, which spreads the matched-filter
output equally over the elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PilotSequence


@dataclass(frozen=True)
class EstimateReport:
    """Per-channel estimates with their normalized errors."""

    terminal_estimate: np.ndarray
    terminal_nmse: float
    station_estimate: np.ndarray | None = None
    station_nmse: float | None = None


def pilot_design_matrix(pilots: PilotSequence, n_elements: int) -> np.ndarray:
    """M x N design matrix whose every column is the pilot burst (rank 1)."""
    if n_elements < 1:
        raise ValueError("n_elements must be positive")
    return np.tile(pilots.symbols[:, None], (1, n_elements))


def ls_estimate(burst: np.ndarray, pilots: PilotSequence, n_elements: int) -> np.ndarray:
    """Minimum-norm least-squares estimate of the per-element coefficients.

    Parameters
    ----------
    burst : ndarray
        Received pilot burst, length M.
    pilots : PilotSequence
        The pilot symbols assumed to have traversed the channel, length M.
    n_elements : int
        Number of surface elements N to solve for.

    Returns
    -------
    ndarray
        Length-N complex estimate.  Equals the Moore-Penrose pseudo-inverse
        of the rank-1 design matrix applied to the burst; in closed form
        every entry is ``sum(conj(s[m]) * y[m]) / (N * sum(|s[m]|^2))``.
    """
    burst = np.asarray(burst, dtype=np.complex128)
    if burst.shape != pilots.symbols.shape:
        raise ValueError("burst and pilot lengths disagree")
    pilot_energy = np.sum(np.abs(pilots.symbols) ** 2)
    if pilot_energy == 0.0:
        raise ValueError("pilot burst must not be all-zero")
    matched = np.sum(np.conj(pilots.symbols) * burst)
    return np.full(n_elements, matched / (n_elements * pilot_energy), dtype=np.complex128)


def ls_estimate_pair(
    burst: np.ndarray,
    own_pilots: PilotSequence,
    remote_pilots: PilotSequence,
    n_elements: int,
) -> tuple[np.ndarray, np.ndarray]:
    """LS estimates of both hop coefficient vectors from a single burst.

    The terminal-side vector is matched against ``own_pilots`` and the
    station-side vector against ``remote_pilots``; with identical pilot
    selections the two estimates coincide.
    """
    terminal = ls_estimate(burst, own_pilots, n_elements)
    station = ls_estimate(burst, remote_pilots, n_elements)
    return terminal, station


def nmse(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Squared-error energy of the estimate normalized by the truth energy."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ValueError("truth and estimate lengths disagree")
    truth_energy = np.sum(np.abs(truth) ** 2)
    if truth_energy == 0.0:
        raise ValueError("truth must not be all-zero")
    return float(np.sum(np.abs(truth - estimate) ** 2) / truth_energy)
