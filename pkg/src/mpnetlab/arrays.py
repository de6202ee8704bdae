"""Antenna-array geometry, steering vectors, and direction-grid dictionaries.

Positions are stored in units of the carrier wavelength, so a phase term is
always 2*pi*(position . direction) and the wavelength never appears at
runtime. All values are immutable after construction; operations are pure and
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .utils import as_rng, complex_normal

_AXES = {"x": 0, "z": 2}
_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

UNIT_TOL = 1e-12
NORM_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AntennaArray:
    """Antenna positions (one 3-vector per antenna, wavelength units) and complex gains."""

    positions: np.ndarray
    gains: np.ndarray
    geometry: str = "custom"

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=float)
        gains = np.array(self.gains, dtype=complex)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")
        if positions.shape[0] == 0:
            raise ValueError("an antenna array needs at least one element")
        if gains.shape != (positions.shape[0],):
            raise ValueError("gains must have shape (N,) matching positions")
        object.__setattr__(self, "positions", _readonly(positions))
        object.__setattr__(self, "gains", _readonly(gains))

    @property
    def size(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class Dictionary:
    """Steering-vector atoms over a direction grid; one column per direction."""

    atoms: np.ndarray
    directions: np.ndarray
    normalized: bool = True

    def __post_init__(self) -> None:
        atoms = np.array(self.atoms, dtype=complex)
        directions = np.array(self.directions, dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] == 0:
            raise ValueError("atoms must have shape (N, A) with A >= 1")
        if directions.shape != (atoms.shape[1], 3):
            raise ValueError("directions must have shape (A, 3) matching atoms")
        if self.normalized:
            norms = np.linalg.norm(atoms, axis=0)
            if np.max(np.abs(norms - 1.0)) > NORM_TOL:
                raise ValueError("dictionary marked normalized has non-unit columns")
        object.__setattr__(self, "atoms", _readonly(atoms))
        object.__setattr__(self, "directions", _readonly(directions))

    @property
    def n_antennas(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


def make_ula(n_antennas: int, spacing: float = 0.5) -> AntennaArray:
    """Uniform linear array along x with unit gains, centered on its centroid."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    x = (np.arange(n_antennas) - (n_antennas - 1) / 2.0) * spacing
    positions = np.zeros((n_antennas, 3))
    positions[:, 0] = x
    return AntennaArray(positions, np.ones(n_antennas, dtype=complex), geometry="ula")


def make_upa(nx: int, nz: int, spacing: float = 0.5) -> AntennaArray:
    """Uniform planar array on the xz-plane with unit gains, centered on its centroid."""
    if nx < 1 or nz < 1:
        raise ValueError("grid dimensions must be >= 1")
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    x = (np.arange(nx) - (nx - 1) / 2.0) * spacing
    z = (np.arange(nz) - (nz - 1) / 2.0) * spacing
    gx, gz = np.meshgrid(x, z, indexing="ij")
    positions = np.zeros((nx * nz, 3))
    positions[:, 0] = gx.ravel()
    positions[:, 2] = gz.ravel()
    return AntennaArray(positions, np.ones(nx * nz, dtype=complex), geometry="upa")


def perturb_array(
    array: AntennaArray,
    gain_std: float,
    pos_std: float,
    rng,
    axes: tuple[str, ...] | None = None,
) -> AntennaArray:
    """True-array realization: jitter gains and positions around the nominal ones.

    Gains receive circularly-symmetric complex noise of variance ``gain_std**2``.
    Each requested axis receives independent real position noise of standard
    deviation ``pos_std`` (wavelengths). By default only x is jittered, or x
    and z for planar geometries.
    """
    if gain_std < 0.0 or pos_std < 0.0:
        raise ValueError("noise standard deviations must be nonnegative")
    if axes is None:
        axes = ("x", "z") if array.geometry == "upa" else ("x",)
    bad = [a for a in axes if a not in _AXES]
    if bad:
        raise ValueError(f"position noise axes must be in {{x, z}}, got {bad}")
    rng = as_rng(rng)
    n = array.size
    gains = array.gains + complex_normal(rng, n, gain_std**2)
    offsets = np.zeros((n, 3))
    for axis in ("x", "z"):
        if axis in axes:
            offsets[:, _AXES[axis]] = rng.normal(0.0, pos_std, n)
    return AntennaArray(array.positions + offsets, gains, geometry=array.geometry)


def _check_unit(direction: np.ndarray) -> np.ndarray:
    u = np.asarray(direction, dtype=float)
    if u.shape != (3,):
        raise ValueError("a direction is a 3-vector")
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError("direction must have unit norm")
    return u


def steering_vector(array: AntennaArray, direction) -> np.ndarray:
    """Array response g_i * exp(-2j*pi * p_i . u) to a plane wave from ``direction``."""
    u = _check_unit(direction)
    return array.gains * np.exp(-2j * np.pi * (array.positions @ u))


def steering_matrix(array: AntennaArray, directions: np.ndarray) -> np.ndarray:
    """Stack steering vectors for several directions as the columns of an (N, A) matrix."""
    dirs = np.asarray(directions, dtype=float)
    if dirs.ndim != 2 or dirs.shape[1] != 3 or dirs.shape[0] == 0:
        raise ValueError("directions must have shape (A, 3) with A >= 1")
    norms = np.linalg.norm(dirs, axis=1)
    if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
        raise ValueError("directions must have unit norm")
    phases = array.positions @ dirs.T
    return array.gains[:, None] * np.exp(-2j * np.pi * phases)


def doa_grid_ula(count: int) -> np.ndarray:
    """Azimuth grid for linear arrays: ``count`` directions in the xy half-plane.

    Azimuths are the midpoints of ``count`` equal cells of [-pi/2, pi/2), so a
    single-point grid is exactly broadside (0, 1, 0).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    azimuth = -np.pi / 2.0 + (np.arange(count) + 0.5) * np.pi / count
    dirs = np.column_stack([np.sin(azimuth), np.cos(azimuth), np.zeros(count)])
    return _readonly(dirs)


def doa_grid_upa(count: int) -> np.ndarray:
    """Near-uniform deterministic grid on the y > 0 hemisphere (Fibonacci spiral)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    y = (np.arange(count) + 0.5) / count
    radius = np.sqrt(1.0 - y**2)
    angle = np.arange(count) * _GOLDEN_ANGLE
    dirs = np.column_stack([radius * np.cos(angle), y, radius * np.sin(angle)])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return _readonly(dirs)


def build_dictionary(array: AntennaArray, directions: np.ndarray, normalize: bool = True) -> Dictionary:
    """Dictionary of steering vectors on ``directions``; columns unit-norm by default."""
    atoms = steering_matrix(array, directions)
    if normalize:
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("cannot normalize a zero steering vector (all gains zero)")
        atoms = atoms / norms
    return Dictionary(atoms, np.asarray(directions, dtype=float), normalized=normalize)
