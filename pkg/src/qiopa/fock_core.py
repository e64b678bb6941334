"""Truncated four-mode bosonic Fock space.

The lab frame has two spatial modes (k1, k2), each carrying an H and a V
polarization mode. Basis states are occupation tuples ``(n_k1H, n_k1V,
n_k2H, n_k2V)`` bounded by a per-mode and a total photon cutoff.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mode",
    "SPATIAL_MODES",
    "Truncation",
    "TruncationError",
    "TruncationMismatch",
    "FockSpace",
    "fock_space",
    "enumerate_basis",
    "StateVector",
    "DensityMatrix",
    "apply_creation",
    "apply_annihilation",
    "inner_product",
    "density_from_pure",
    "partial_trace",
    "reduced_density",
    "von_neumann_entropy",
    "number_expectation",
]

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12
EIGEN_CLAMP = 1e-10


class Mode(IntEnum):
    K1H = 0
    K1V = 1
    K2H = 2
    K2V = 3

    @property
    def spatial(self) -> int:
        return 1 if self < 2 else 2


# spatial mode -> (H mode, V mode)
SPATIAL_MODES = {1: (Mode.K1H, Mode.K1V), 2: (Mode.K2H, Mode.K2V)}
ALL_MODES = (Mode.K1H, Mode.K1V, Mode.K2H, Mode.K2V)


class TruncationError(ValueError):
    """Raised when a cutoff is too small for the requested operation."""


class TruncationMismatch(ValueError):
    """Raised when two states live on differently truncated spaces."""


@dataclass(frozen=True)
class Truncation:
    """Dual photon-number cutoff: ``n_i <= per_mode`` and ``sum(n) <= total``."""

    per_mode: int = 9
    total: int = 17

    def __post_init__(self):
        for name in ("per_mode", "total"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    def require_minimum(self) -> None:
        # first-order amplified states need n=2 in one mode and 3 photons total
        if self.per_mode < 2 or self.total < 3:
            raise TruncationError(
                f"truncation {self} too small: need per_mode >= 2 and total >= 3"
            )

    def admits(self, occ) -> bool:
        return all(0 <= n <= self.per_mode for n in occ) and sum(occ) <= self.total


def enumerate_basis(truncation: Truncation) -> list[tuple[int, int, int, int]]:
    """All admissible occupation tuples, in lexicographic order."""
    rng = range(truncation.per_mode + 1)
    return [occ for occ in itertools.product(rng, repeat=4) if sum(occ) <= truncation.total]


class FockSpace:
    """Basis bookkeeping and ladder matrices for one truncation.

    Instances are shared through :func:`fock_space`; treat them as read-only.
    """

    def __init__(self, truncation: Truncation):
        self.truncation = truncation
        self.tuples = enumerate_basis(truncation)
        self.basis = np.array(self.tuples, dtype=np.int64).reshape(-1, 4)
        self.basis.setflags(write=False)
        self.dim = len(self.tuples)
        self._radix = truncation.per_mode + 1
        lookup = np.full(self._radix**4, -1, dtype=np.int64)
        lookup[self._encode(self.basis)] = np.arange(self.dim)
        self._lookup = lookup
        self._creation: dict[int, sp.csr_matrix] = {}

    def _encode(self, occ: np.ndarray) -> np.ndarray:
        r = self._radix
        return ((occ[..., 0] * r + occ[..., 1]) * r + occ[..., 2]) * r + occ[..., 3]

    def indices_of(self, occ: np.ndarray) -> np.ndarray:
        """Basis indices of an ``(..., 4)`` occupation array; -1 where inadmissible."""
        occ = np.asarray(occ, dtype=np.int64)
        inside = np.all((occ >= 0) & (occ <= self.truncation.per_mode), axis=-1)
        inside &= occ.sum(axis=-1) <= self.truncation.total
        out = np.full(occ.shape[:-1], -1, dtype=np.int64)
        out[inside] = self._lookup[self._encode(occ[inside])]
        return out

    def index(self, occ) -> int:
        idx = int(self.indices_of(np.asarray(occ))[()])
        if idx < 0:
            raise TruncationError(f"occupation {tuple(occ)} outside {self.truncation}")
        return idx

    def creation_matrix(self, mode: Mode) -> sp.csr_matrix:
        mode = Mode(mode)
        if mode not in self._creation:
            shifted = self.basis.copy()
            shifted[:, mode] += 1
            rows = self.indices_of(shifted)
            keep = rows >= 0
            cols = np.arange(self.dim)[keep]
            data = np.sqrt(shifted[keep, mode].astype(float))
            self._creation[mode] = sp.csr_matrix(
                (data, (rows[keep], cols)), shape=(self.dim, self.dim)
            )
        return self._creation[mode]

    def spatial_split(self, keep: int):
        """Index maps for a bipartition into spatial mode ``keep`` and the rest.

        Returns ``(kept_basis, kept_index, traced_basis, traced_index)`` where
        the ``*_index`` arrays give, for every full basis state, the row of its
        kept/traced part in ``kept_basis``/``traced_basis``.
        """
        return _spatial_split(self.truncation, keep)


@lru_cache(maxsize=32)
def fock_space(truncation: Truncation) -> FockSpace:
    return FockSpace(truncation)


@lru_cache(maxsize=64)
def _spatial_split(truncation: Truncation, keep: int):
    if keep not in (1, 2):
        raise ValueError(f"spatial mode must be 1 or 2, got {keep!r}")
    space = fock_space(truncation)
    kcols = [int(m) for m in SPATIAL_MODES[keep]]
    tcols = [int(m) for m in SPATIAL_MODES[3 - keep]]
    kept, kidx = np.unique(space.basis[:, kcols], axis=0, return_inverse=True)
    traced, tidx = np.unique(space.basis[:, tcols], axis=0, return_inverse=True)
    return kept, kidx.ravel(), traced, tidx.ravel()


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes over the basis of ``truncation``.

    ``dropped_weight`` accumulates squared amplitude that operations pushed
    past the cutoff (or, for :func:`qiopa.opa_model.evolve`, the estimated
    leakage). It is zero for states that never touched the boundary.
    """

    amplitudes: np.ndarray
    truncation: Truncation = field(default_factory=Truncation)
    dropped_weight: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (fock_space(self.truncation).dim,):
            raise ValueError(
                f"expected {fock_space(self.truncation).dim} amplitudes, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_dict(cls, amplitudes: dict, truncation: Truncation = Truncation()) -> StateVector:
        space = fock_space(truncation)
        amps = np.zeros(space.dim, dtype=complex)
        for occ, c in amplitudes.items():
            amps[space.index(occ)] += c
        return cls(amps, truncation)

    @classmethod
    def vacuum(cls, truncation: Truncation = Truncation()) -> StateVector:
        return cls.from_dict({(0, 0, 0, 0): 1.0}, truncation)

    @property
    def space(self) -> FockSpace:
        return fock_space(self.truncation)

    def amplitude(self, occ) -> complex:
        idx = int(self.space.indices_of(np.asarray(occ))[()])
        return complex(self.amplitudes[idx]) if idx >= 0 else 0j

    def as_dict(self, atol: float = 0.0) -> dict[tuple[int, ...], complex]:
        nz = np.flatnonzero(np.abs(self.amplitudes) > atol)
        return {self.space.tuples[i]: complex(self.amplitudes[i]) for i in nz}

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> StateVector:
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n, self.truncation, self.dropped_weight)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __add__(self, other: StateVector) -> StateVector:
        _check_same(self, other)
        return StateVector(
            self.amplitudes + other.amplitudes,
            self.truncation,
            self.dropped_weight + other.dropped_weight,
        )

    def __mul__(self, c) -> StateVector:
        return StateVector(self.amplitudes * c, self.truncation, self.dropped_weight)

    __rmul__ = __mul__


def _check_same(a: StateVector, b: StateVector) -> None:
    if a.truncation != b.truncation:
        raise TruncationMismatch(f"{a.truncation} != {b.truncation}")


def apply_creation(state: StateVector, mode: Mode, *, strict: bool = False) -> StateVector:
    """Apply the creation operator of ``mode``.

    Components pushed past the cutoff are removed and their weight
    ``|c|^2 (n+1)`` is added to ``dropped_weight``; with ``strict`` any such
    loss raises :class:`TruncationError`.
    """
    space = state.space
    mode = Mode(mode)
    n = space.basis[:, mode]
    overflow = (n + 1 > space.truncation.per_mode) | (
        space.basis.sum(axis=1) + 1 > space.truncation.total
    )
    lost = float(np.sum(np.abs(state.amplitudes[overflow]) ** 2 * (n[overflow] + 1)))
    if strict and lost > 0:
        raise TruncationError(f"creation on {mode.name} dropped weight {lost:g}")
    out = space.creation_matrix(mode) @ state.amplitudes
    return StateVector(out, state.truncation, state.dropped_weight + lost)


def apply_annihilation(state: StateVector, mode: Mode) -> StateVector:
    space = state.space
    out = space.creation_matrix(Mode(mode)).T @ state.amplitudes
    return StateVector(out, state.truncation, state.dropped_weight)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    _check_same(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density operator over an occupation basis.

    ``modes`` names the lab modes the columns of ``basis`` refer to: all
    four for the full space, or one spatial mode's (H, V) pair after a
    partial trace.
    """

    matrix: np.ndarray
    basis: np.ndarray
    modes: tuple[Mode, ...] = ALL_MODES
    success_probability: float = 1.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(self.basis):
            raise ValueError("matrix must be square and match the basis")
        scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
        if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
            raise ValueError("density matrix is not Hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "modes", tuple(Mode(x) for x in self.modes))
        if not 0.0 <= self.success_probability <= 1.0:
            raise ValueError("success_probability must lie in [0, 1]")

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def density_from_pure(state: StateVector, *, strict: bool = True) -> DensityMatrix:
    """|psi><psi| on the full space. Dense: mind the size for large cutoffs."""
    norm = state.norm()
    if abs(norm - 1.0) > NORM_TOL:
        if strict:
            raise ValueError(f"state is not normalized (norm {norm:.12g})")
        state = state.normalized()
    v = state.amplitudes
    return DensityMatrix(np.outer(v, v.conj()), state.space.basis)


def partial_trace(rho: DensityMatrix, keep: int) -> DensityMatrix:
    """Trace out the spatial mode other than ``keep`` (1 or 2)."""
    if rho.modes != ALL_MODES:
        raise ValueError("partial_trace expects a density matrix on all four modes")
    space = _space_for_basis(rho.basis)
    kept, kidx, _, tidx = space.spatial_split(keep)
    same = tidx[:, None] == tidx[None, :]
    out = np.zeros((len(kept), len(kept)), dtype=complex)
    rows, cols = np.nonzero(same)
    np.add.at(out, (kidx[rows], kidx[cols]), rho.matrix[rows, cols])
    return DensityMatrix(out, kept, SPATIAL_MODES[keep], rho.success_probability)


def reduced_density(state: StateVector, keep: int, *, success_probability: float = 1.0) -> DensityMatrix:
    """Reduced density of a pure state without forming the full |psi><psi|."""
    kept, kidx, traced, tidx = state.space.spatial_split(keep)
    psi = np.zeros((len(kept), len(traced)), dtype=complex)
    psi[kidx, tidx] = state.amplitudes
    rho = psi @ psi.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, kept, SPATIAL_MODES[keep], success_probability)


def _space_for_basis(basis: np.ndarray) -> FockSpace:
    basis = np.asarray(basis)
    trunc = Truncation(int(basis.max(initial=0)), int(basis.sum(axis=1).max(initial=0)))
    space = fock_space(trunc)
    if space.dim != len(basis) or not np.array_equal(space.basis, basis):
        raise ValueError("basis is not a full truncated four-mode basis")
    return space


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-Tr rho log2 rho in bits, with 0 log 0 = 0."""
    lam = rho.eigenvalues()
    if lam.size and lam.min() < -EIGEN_CLAMP:
        raise ValueError(f"density matrix has negative eigenvalue {lam.min():.3e}")
    lam = lam[lam > 0]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def _polarization_number_operator(basis: np.ndarray, h: int, v: int, direction) -> sp.csr_matrix:
    """Number operator a_d^dag a_d with a_d = conj(alpha) a_H + conj(beta) a_V."""
    alpha, beta = (complex(x) for x in direction)
    basis = np.asarray(basis, dtype=np.int64)
    dim = len(basis)
    nh, nv = basis[:, h], basis[:, v]
    lookup = {tuple(row): i for i, row in enumerate(basis.tolist())}
    rows, cols, vals = list(range(dim)), list(range(dim)), list(abs(alpha) ** 2 * nh + abs(beta) ** 2 * nv)
    # a_H^dag a_V moves one photon V -> H
    for j in np.flatnonzero(nv > 0):
        target = basis[j].copy()
        target[h] += 1
        target[v] -= 1
        i = lookup.get(tuple(target.tolist()))
        if i is None:
            continue
        c = np.sqrt((nh[j] + 1) * nv[j])
        rows += [i, j]
        cols += [j, i]
        vals += [alpha * beta.conjugate() * c, alpha.conjugate() * beta * c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)


def number_expectation(rho: DensityMatrix, mode: Mode, direction=None) -> float:
    """Tr(rho n) for the photon number of ``mode``.

    With ``direction=(alpha, beta)`` the operator counts photons in the
    polarization ``alpha|H> + beta|V>`` of the spatial mode ``mode`` belongs
    to; ``PolarizationQubit.psi`` / ``.perp`` give such pairs.
    """
    mode = Mode(mode)
    if direction is None:
        pos = rho.modes.index(mode)
        return float(np.real(np.diag(rho.matrix) @ rho.basis[:, pos]))
    h_mode, v_mode = SPATIAL_MODES[mode.spatial]
    op = _polarization_number_operator(
        rho.basis, rho.modes.index(h_mode), rho.modes.index(v_mode), direction
    )
    # Tr(rho n) = sum_ij rho_ji n_ij
    return float(np.real(np.sum(op.multiply(rho.matrix.T))))
