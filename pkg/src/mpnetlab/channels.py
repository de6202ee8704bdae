"""Sparse multipath channel synthesis, noisy observation streams, and array anomalies.

Ground-truth channels are built from unnormalized steering vectors of the true
array (that is the physics); the dictionaries used by estimators are a separate,
normalized object. Stream production is sequential: the sample order is part of
the contract and every randomized operation is a pure function of its inputs
and the generator state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .arrays import AntennaArray, steering_matrix
from .fileio import atomic_write_rows, fmt_float
from .utils import as_rng, complex_normal, energy, from_db


@dataclass(frozen=True)
class MultipathChannel:
    """A sparse channel: per-path complex gains and arrival directions, plus the
    resulting length-N channel vector."""

    gains: np.ndarray
    directions: np.ndarray
    vector: np.ndarray

    def __post_init__(self) -> None:
        gains = np.array(self.gains, dtype=complex)
        directions = np.array(self.directions, dtype=float)
        vector = np.array(self.vector, dtype=complex)
        if gains.ndim != 1 or gains.shape[0] == 0:
            raise ValueError("a channel needs at least one path")
        if directions.shape != (gains.shape[0], 3):
            raise ValueError("directions must have shape (P, 3)")
        if energy(vector) == 0.0:
            raise ValueError("channel vector vanished (all antenna gains zero?)")
        for name, value in (("gains", gains), ("directions", directions), ("vector", vector)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_paths(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class ChannelSample:
    """Ground truth, its noisy observation, and the (known) noise variance."""

    channel: np.ndarray
    observation: np.ndarray
    noise_var: float
    snr_db: float

    def __post_init__(self) -> None:
        channel = np.array(self.channel, dtype=complex)
        observation = np.array(self.observation, dtype=complex)
        if channel.ndim != 1 or observation.shape != channel.shape:
            raise ValueError("channel and observation must be equal-length vectors")
        if self.noise_var < 0.0:
            raise ValueError("noise variance must be nonnegative")
        channel.setflags(write=False)
        observation.setflags(write=False)
        object.__setattr__(self, "channel", channel)
        object.__setattr__(self, "observation", observation)


@dataclass(frozen=True)
class FixedSnr:
    value_db: float = 10.0


@dataclass(frozen=True)
class TruncatedGaussianSnr:
    """Gaussian SNR in dB, rejection-sampled above a floor (low-SNR observations
    are filtered out before they reach the estimator)."""

    mean_db: float = 10.0
    std_db: float = 4.0
    floor_db: float = 1.0

    def __post_init__(self) -> None:
        if self.std_db < 0.0:
            raise ValueError("std_db must be nonnegative")
        if self.acceptance_probability() < 1e-6:
            raise ValueError("SNR floor leaves a negligible acceptance probability")

    def acceptance_probability(self) -> float:
        if self.std_db == 0.0:
            return 1.0 if self.mean_db >= self.floor_db else 0.0
        z = (self.floor_db - self.mean_db) / (self.std_db * math.sqrt(2.0))
        return 0.5 * math.erfc(z)


SnrModel = "FixedSnr | TruncatedGaussianSnr"


def sample_snr(model, rng) -> float:
    """Draw one SNR value (dB) from the configured model."""
    rng = as_rng(rng)
    if isinstance(model, FixedSnr):
        return float(model.value_db)
    if isinstance(model, TruncatedGaussianSnr):
        if model.std_db == 0.0:
            if model.mean_db < model.floor_db:
                raise ValueError("degenerate SNR model below its own floor")
            return float(model.mean_db)
        while True:
            value = rng.normal(model.mean_db, model.std_db)
            if value >= model.floor_db:
                return float(value)
    raise TypeError(f"unknown SNR model: {model!r}")


@dataclass(frozen=True)
class ChannelGenConfig:
    """Configurable sparse-multipath generator.

    Path count is uniform on [paths_min, paths_max]; path gains are complex
    Gaussian with expected powers decaying geometrically by ``gain_decay``;
    arrival directions are uniform over the grid domain (azimuth half-plane or
    the y > 0 hemisphere), optionally scattered around a per-channel cluster
    center.
    """

    paths_min: int = 1
    paths_max: int = 10
    gain_decay: float = 0.7
    doa_domain: str = "azimuth"
    cluster_std_deg: float | None = None
    snr: FixedSnr | TruncatedGaussianSnr = field(default_factory=FixedSnr)

    def __post_init__(self) -> None:
        if self.paths_min < 1:
            raise ValueError("paths_min must be >= 1 (a channel cannot have zero paths)")
        if self.paths_max < self.paths_min:
            raise ValueError("paths_max must be >= paths_min")
        if not 0.0 < self.gain_decay <= 1.0:
            raise ValueError("gain_decay must lie in (0, 1]")
        if self.doa_domain not in ("azimuth", "hemisphere"):
            raise ValueError("doa_domain must be 'azimuth' or 'hemisphere'")
        if self.cluster_std_deg is not None and self.cluster_std_deg < 0.0:
            raise ValueError("cluster_std_deg must be nonnegative")


def _azimuth_to_dir(azimuth: np.ndarray) -> np.ndarray:
    return np.column_stack([np.sin(azimuth), np.cos(azimuth), np.zeros_like(azimuth)])


def _sample_directions(cfg: ChannelGenConfig, count: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.doa_domain == "azimuth":
        if cfg.cluster_std_deg is None:
            azimuth = rng.uniform(-np.pi / 2.0, np.pi / 2.0, count)
        else:
            center = rng.uniform(-np.pi / 2.0, np.pi / 2.0)
            spread = np.deg2rad(cfg.cluster_std_deg)
            azimuth = np.clip(center + rng.normal(0.0, spread, count), -np.pi / 2.0, np.pi / 2.0)
        return _azimuth_to_dir(azimuth)
    if cfg.cluster_std_deg is None:
        dirs = rng.standard_normal((count, 3))
    else:
        center = rng.standard_normal(3)
        center /= np.linalg.norm(center)
        spread = np.deg2rad(cfg.cluster_std_deg)
        dirs = center[None, :] + spread * rng.standard_normal((count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs[:, 1] = np.abs(dirs[:, 1])
    return dirs


def generate_channel(cfg: ChannelGenConfig, true_array: AntennaArray, rng) -> MultipathChannel:
    """Draw one sparse channel realization on ``true_array``."""
    rng = as_rng(rng)
    n_paths = int(rng.integers(cfg.paths_min, cfg.paths_max + 1))
    directions = _sample_directions(cfg, n_paths, rng)
    powers = cfg.gain_decay ** np.arange(n_paths)
    gains = complex_normal(rng, n_paths, 1.0) * np.sqrt(powers)
    vector = steering_matrix(true_array, directions) @ gains
    return MultipathChannel(gains, directions, vector)


def observe(channel: MultipathChannel, snr_db: float, rng) -> ChannelSample:
    """Noisy observation of ``channel`` at the requested input SNR.

    The noise variance is recorded on the sample: estimators run with a perfect
    noise-variance estimate. ``snr_db = inf`` disables the noise entirely.
    """
    rng = as_rng(rng)
    h = channel.vector
    n = h.shape[0]
    if math.isinf(snr_db) and snr_db > 0:
        return ChannelSample(h, h.copy(), 0.0, snr_db)
    noise_var = energy(h) / (n * from_db(snr_db))
    x = h + complex_normal(rng, n, noise_var)
    return ChannelSample(h, x, noise_var, float(snr_db))


def break_antennas(array: AntennaArray, fraction: float, rng) -> AntennaArray:
    """Set a uniformly chosen round(fraction * N) of the antenna gains to zero.

    Ties in the rounding go toward fewer broken antennas.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    rng = as_rng(rng)
    n = array.size
    count = int(np.ceil(fraction * n - 0.5))
    gains = array.gains.copy()
    if count > 0:
        broken = rng.choice(n, size=count, replace=False)
        gains[broken] = 0.0
    return AntennaArray(array.positions, gains, geometry=array.geometry)


def age_antennas(array: AntennaArray, gain_std: float, rng) -> AntennaArray:
    """One aging step: every gain drifts by complex noise of variance ``gain_std**2``."""
    if gain_std < 0.0:
        raise ValueError("gain_std must be nonnegative")
    rng = as_rng(rng)
    gains = array.gains + complex_normal(rng, array.size, gain_std**2)
    return AntennaArray(array.positions, gains, geometry=array.geometry)


@dataclass(frozen=True)
class ArrayEvent:
    """Scheduled change of the true array: takes effect for all samples with
    index >= ``index``."""

    index: int
    kind: str
    fraction: float = 0.0
    gain_std: float = 0.0
    array: AntennaArray | None = None

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("event index must be >= 0")
        if self.kind not in ("break", "age", "replace"):
            raise ValueError("event kind must be 'break', 'age' or 'replace'")
        if self.kind == "replace" and self.array is None:
            raise ValueError("replace events need a replacement array")

    def apply(self, array: AntennaArray, rng) -> AntennaArray:
        if self.kind == "break":
            return break_antennas(array, self.fraction, rng)
        if self.kind == "age":
            return age_antennas(array, self.gain_std, rng)
        return self.array


class ChannelStream:
    """Deterministic ordered source of channel observations.

    Iteration is unbounded; use :meth:`take` for a finite prefix. Scheduled
    :class:`ArrayEvent` entries swap the true array mid-stream at their declared
    sample indices. The sequence of emitted samples is a pure function of the
    configuration, the base array, the events, and the generator seed.
    """

    def __init__(self, cfg: ChannelGenConfig, true_array: AntennaArray, rng, events: Sequence[ArrayEvent] = ()):
        self._cfg = cfg
        self._array = true_array
        self._rng = as_rng(rng)
        self._events = sorted(events, key=lambda e: e.index)
        self._event_pos = 0
        self._index = 0

    @property
    def current_array(self) -> AntennaArray:
        return self._array

    @property
    def next_index(self) -> int:
        return self._index

    def __iter__(self) -> Iterator[ChannelSample]:
        return self

    def __next__(self) -> ChannelSample:
        while self._event_pos < len(self._events) and self._events[self._event_pos].index <= self._index:
            self._array = self._events[self._event_pos].apply(self._array, self._rng)
            self._event_pos += 1
        snr_db = sample_snr(self._cfg.snr, self._rng)
        channel = generate_channel(self._cfg, self._array, self._rng)
        sample = observe(channel, snr_db, self._rng)
        self._index += 1
        return sample

    def take(self, count: int) -> list[ChannelSample]:
        if count < 0:
            raise ValueError("count must be >= 0")
        return [next(self) for _ in range(count)]


def make_stream(cfg: ChannelGenConfig, true_array: AntennaArray, rng, events: Sequence[ArrayEvent] = ()) -> ChannelStream:
    return ChannelStream(cfg, true_array, rng, events)


class ReplayStream:
    """Serve previously recorded samples in their original order."""

    current_array = None

    def __init__(self, samples: Sequence[ChannelSample]):
        self._samples = list(samples)
        self._pos = 0

    def __len__(self) -> int:
        return len(self._samples) - self._pos

    def __iter__(self) -> Iterator[ChannelSample]:
        return self

    def __next__(self) -> ChannelSample:
        if self._pos >= len(self._samples):
            raise StopIteration
        sample = self._samples[self._pos]
        self._pos += 1
        return sample

    def take(self, count: int) -> list[ChannelSample]:
        if count < 0:
            raise ValueError("count must be >= 0")
        if self._pos + count > len(self._samples):
            raise ValueError("replay file has fewer samples than requested")
        chunk = self._samples[self._pos : self._pos + count]
        self._pos += count
        return chunk


def _sample_header(n: int) -> list[str]:
    header = ["index", "snr_db", "noise_var"]
    header += [f"x{i}_{p}" for i in range(n) for p in ("re", "im")]
    header += [f"h{i}_{p}" for i in range(n) for p in ("re", "im")]
    return header


def sample_to_row(index: int, sample: ChannelSample) -> list[str]:
    row = [str(index), fmt_float(sample.snr_db), fmt_float(sample.noise_var)]
    for vec in (sample.observation, sample.channel):
        for value in vec:
            row.append(fmt_float(value.real))
            row.append(fmt_float(value.imag))
    return row


def dump_stream(samples: Iterable[ChannelSample], path) -> None:
    """Record samples to CSV so another run (or implementation) can replay them.

    One row per sample: index, snr_db, noise_var, then interleaved re/im parts
    of the observation and of the ground-truth channel.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("refusing to dump an empty stream")
    n = samples[0].channel.shape[0]
    rows = [sample_to_row(i, s) for i, s in enumerate(samples)]
    atomic_write_rows(path, _sample_header(n), rows)


def load_stream(path) -> list[ChannelSample]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise ValueError(f"{path}: not a stream dump (no samples)")
    header = lines[0].split(",")
    if (len(header) - 3) % 4 != 0 or header[:3] != ["index", "snr_db", "noise_var"]:
        raise ValueError(f"{path}: unrecognized stream header")
    n = (len(header) - 3) // 4
    samples = []
    for line in lines[1:]:
        fields = line.split(",")
        if len(fields) != len(header):
            raise ValueError(f"{path}: malformed row with {len(fields)} fields")
        values = np.array([float(v) for v in fields[3:]])
        x = values[0 : 2 * n : 2] + 1j * values[1 : 2 * n : 2]
        h = values[2 * n :: 2] + 1j * values[2 * n + 1 :: 2]
        samples.append(ChannelSample(h, x, float(fields[2]), float(fields[1])))
    return samples
