"""Estimation-quality metrics and result histograms."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .utils import energy, to_db


def rmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Squared estimation error relative to the true channel energy."""
    truth_energy = energy(truth)
    if truth_energy == 0.0:
        raise ValueError("relative error is undefined for a zero ground truth")
    return energy(np.asarray(estimate) - np.asarray(truth)) / truth_energy


def snr_out(estimates: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> float:
    """Post-estimation SNR in dB: mean channel energy over mean squared error.

    Returns +inf when every estimate is exact.
    """
    estimates = list(estimates)
    truths = list(truths)
    if not estimates or len(estimates) != len(truths):
        raise ValueError("need equally many estimates and ground truths")
    signal = float(np.mean([energy(h) for h in truths]))
    error = float(np.mean([energy(np.asarray(e) - np.asarray(h)) for e, h in zip(estimates, truths)]))
    if error == 0.0:
        return math.inf
    return to_db(signal / error)


def depth_histogram(depths: Sequence[int]) -> np.ndarray:
    """Counts per selected depth; index d holds the number of depth-d estimates."""
    depths = np.asarray(depths, dtype=int)
    if depths.size == 0:
        raise ValueError("need at least one depth")
    if np.any(depths < 0):
        raise ValueError("depths must be nonnegative")
    return np.bincount(depths)


def snr_histogram(snr_values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Counts of SNR values (dB) in 1-dB bins; returns (bin_edges, counts)."""
    values = np.asarray(snr_values, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one SNR value")
    lo = math.floor(values.min())
    hi = math.ceil(values.max())
    if hi <= lo:
        hi = lo + 1
    edges = np.arange(lo, hi + 1, dtype=float)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts
