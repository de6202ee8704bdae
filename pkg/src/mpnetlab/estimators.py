"""Classical channel estimators: least squares, matching pursuit, and OMP.

The residual-energy stopping rules live here because the unfolded network
shares them; thresholds are always evaluated on the unit-normalized input
scale, with the noise variance divided by the input energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import Dictionary
from .utils import energy

# Residual energies at or below this fraction of the input energy count as an
# exact representation: recovery of a pure atom leaves only rounding noise.
ZERO_RESIDUAL_FLOOR = 1e-24

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class StoppingRule:
    """When greedy atom selection stops.

    kind "fixed" always runs ``depth`` layers; "sc1" and "sc2" stop once the
    normalized residual energy falls under a noise-calibrated threshold.
    ``max_depth`` is a safety cap; left unset it resolves to max(N // 4, 1) at
    call time (never below ``depth`` for fixed rules).
    """

    kind: str
    depth: int | None = None
    max_depth: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "sc1", "sc2"):
            raise ValueError("rule kind must be 'fixed', 'sc1' or 'sc2'")
        if self.kind == "fixed":
            if self.depth is None or self.depth < 1:
                raise ValueError("fixed rules need depth >= 1")
        elif self.depth is not None:
            raise ValueError("depth only applies to fixed rules")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    @classmethod
    def fixed(cls, depth: int, max_depth: int | None = None) -> "StoppingRule":
        return cls("fixed", depth=depth, max_depth=max_depth)

    @classmethod
    def sc1(cls, max_depth: int | None = None) -> "StoppingRule":
        return cls("sc1", max_depth=max_depth)

    @classmethod
    def sc2(cls, max_depth: int | None = None) -> "StoppingRule":
        return cls("sc2", max_depth=max_depth)

    def cap(self, n_dims: int) -> int:
        if self.max_depth is not None:
            return self.max_depth
        cap = max(n_dims // 4, 1)
        if self.kind == "fixed":
            cap = max(cap, self.depth)
        return cap


def sc_threshold(rule: StoppingRule, noise_var_norm: float, n_dims: int) -> float:
    """Residual-energy threshold on the unit-input scale.

    ``noise_var_norm`` is the noise variance divided by the input energy.
    """
    if noise_var_norm < 0.0:
        raise ValueError("normalized noise variance must be nonnegative")
    if rule.kind == "fixed":
        return 0.0
    if rule.kind == "sc1":
        if n_dims < 2:
            raise ValueError("sc1 needs N >= 2 so that log N is positive")
        return noise_var_norm * (n_dims + 2.0 * np.sqrt(n_dims * np.log(n_dims)))
    return noise_var_norm * n_dims


def should_stop(
    rule: StoppingRule,
    residual_energy_norm: float,
    depth: int,
    noise_var_norm: float,
    n_dims: int,
) -> bool:
    if depth >= rule.cap(n_dims):
        return True
    if residual_energy_norm <= ZERO_RESIDUAL_FLOOR:
        return True
    if rule.kind == "fixed":
        return depth >= rule.depth
    return residual_energy_norm <= sc_threshold(rule, noise_var_norm, n_dims)


@dataclass(frozen=True)
class Estimate:
    """Denoised channel plus the visited atom support, in selection order."""

    channel: np.ndarray
    support: tuple[int, ...]
    depth: int
    residual_energy: float

    def __post_init__(self) -> None:
        if self.depth != len(self.support):
            raise ValueError("depth must equal the support length")
        if self.residual_energy < 0.0:
            raise ValueError("residual energy must be nonnegative")


def ls_estimate(x: np.ndarray) -> Estimate:
    """The raw observation itself: unbiased, depth-zero estimate."""
    x = np.asarray(x, dtype=complex)
    return Estimate(x.copy(), (), 0, 0.0)


def _check_inputs(dictionary: Dictionary, x, rule: StoppingRule):
    if not dictionary.normalized:
        raise ValueError("greedy pursuit needs unit-norm atoms; build with normalize=True")
    atoms = dictionary.atoms
    x = np.asarray(x, dtype=complex)
    if x.shape != (atoms.shape[0],):
        raise ValueError(f"input must have shape ({atoms.shape[0]},)")
    x_energy = energy(x)
    if x_energy == 0.0 and rule.kind != "fixed":
        raise ValueError("residual stopping rules are undefined for a zero input")
    return atoms, x, x_energy


def matching_pursuit(dictionary: Dictionary, x, rule: StoppingRule, noise_var: float = 0.0) -> Estimate:
    """Greedy projection pursuit: repeatedly select the atom most correlated with
    the residual and subtract its rank-one projection.

    Atoms may be reselected. Argmax ties break toward the lowest index.
    """
    atoms, x, x_energy = _check_inputs(dictionary, x, rule)
    n = atoms.shape[0]
    noise_var_norm = noise_var / x_energy if x_energy > 0.0 else 0.0
    r = x.copy()
    residual_norm = 1.0 if x_energy > 0.0 else 0.0
    support: list[int] = []
    while not should_stop(rule, residual_norm, len(support), noise_var_norm, n):
        corr = atoms.conj().T @ r
        s = int(np.argmax(np.abs(corr)))
        coeff = np.vdot(atoms[:, s], r)
        r = r - atoms[:, s] * coeff
        support.append(s)
        residual_norm = energy(r) / x_energy
    return Estimate(x - r, tuple(support), len(support), energy(r))


def omp(dictionary: Dictionary, x, rule: StoppingRule, noise_var: float = 0.0) -> Estimate:
    """Orthogonal matching pursuit: same selection rule, but the residual is kept
    orthogonal to every selected atom (coefficients re-fit by least squares via
    incremental orthogonalization). The support is duplicate-free.

    Raises numpy.linalg.LinAlgError when the selected atoms become linearly
    dependent (degenerate grid).
    """
    atoms, x, x_energy = _check_inputs(dictionary, x, rule)
    n, n_atoms = atoms.shape
    noise_var_norm = noise_var / x_energy if x_energy > 0.0 else 0.0
    r = x.copy()
    residual_norm = 1.0 if x_energy > 0.0 else 0.0
    support: list[int] = []
    selected = np.zeros(n_atoms, dtype=bool)
    basis = np.zeros((n, 0), dtype=complex)
    while not should_stop(rule, residual_norm, len(support), noise_var_norm, n):
        if selected.all():
            raise np.linalg.LinAlgError("every atom is already in the support")
        corr = np.abs(atoms.conj().T @ r)
        corr[selected] = -1.0
        s = int(np.argmax(corr))
        atom = atoms[:, s]
        # two orthogonalization passes keep the basis orthonormal even for
        # nearly collinear grid atoms
        q = atom - basis @ (basis.conj().T @ atom)
        q = q - basis @ (basis.conj().T @ q)
        q_norm = np.linalg.norm(q)
        if q_norm <= _RANK_TOL:
            raise np.linalg.LinAlgError("selected atoms are linearly dependent")
        q = q / q_norm
        r = r - q * np.vdot(q, r)
        basis = np.column_stack([basis, q])
        selected[s] = True
        support.append(s)
        residual_norm = energy(r) / x_energy
    return Estimate(x - r, tuple(support), len(support), energy(r))
