"""Cloning / U-NOT figures of merit on the amplified output.

All quantities are computed on the output conditioned on at least one photon
in the anticloning spatial mode k2, the signature of an amplification event.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .fock_core import (
    DensityMatrix,
    Mode,
    StateVector,
    Truncation,
    density_from_pure,
    number_expectation,
    reduced_density,
    von_neumann_entropy,
)
from .opa_model import (
    PolarizationQubit,
    evolve,
    first_order_output,
    prepare_injected,
    rotate_polarization,
    rotation_block,
)

__all__ = [
    "NoAmplificationError",
    "PostSelectedState",
    "FidelityReport",
    "post_select_amplified",
    "cloning_fidelity",
    "unot_fidelity",
    "ratio_R",
    "ratio_R_star",
    "fidelity_from_ratio",
    "fidelity_star_from_ratio",
    "entropy_pair",
    "output_state",
    "fidelity_report",
    "UniversalityScan",
    "universality_scan",
    "flipped_weight",
]


class NoAmplificationError(ValueError):
    """The state has no weight (or no photons) where the metric needs them."""


@dataclass(frozen=True, eq=False)
class PostSelectedState:
    """Renormalized projection of a pure output onto ``n_k2 >= 1``.

    ``rho`` is built on demand; on large truncations prefer ``reduced``.
    """

    state: StateVector
    success_probability: float

    @cached_property
    def rho(self) -> DensityMatrix:
        rho = density_from_pure(self.state)
        return DensityMatrix(rho.matrix, rho.basis, rho.modes, self.success_probability)

    def reduced(self, keep: int) -> DensityMatrix:
        cache = self.__dict__.setdefault("_reduced", {})
        if keep not in cache:
            cache[keep] = reduced_density(self.state, keep, success_probability=self.success_probability)
        return cache[keep]


def post_select_amplified(state: StateVector) -> PostSelectedState:
    """Condition ``state`` on at least one photon in k2.

    The input may be unnormalized; ``success_probability`` is the projected
    weight relative to the total.
    """
    basis = state.space.basis
    mask = (basis[:, 2] + basis[:, 3]) >= 1
    probs = state.probabilities()
    total = float(probs.sum())
    kept = float(probs[mask].sum())
    if total == 0 or kept <= 1e-300 or kept / total < 1e-30:
        raise NoAmplificationError("no weight with a photon in k2 (no amplification)")
    amps = np.where(mask, state.amplitudes, 0) / np.sqrt(kept)
    return PostSelectedState(StateVector(amps, state.truncation), kept / total)


def _ratio(num: float, den: float, what: str) -> float:
    if den <= 0:
        raise NoAmplificationError(f"{what}: zero denominator")
    return float(num / den)


def cloning_fidelity(ps: PostSelectedState, qubit: PolarizationQubit) -> float:
    """``Tr(rho1 n_1Psi) / Tr(rho1 n_1)``."""
    rho1 = ps.reduced(1)
    n_psi = number_expectation(rho1, Mode.K1H, qubit.psi)
    n_tot = number_expectation(rho1, Mode.K1H) + number_expectation(rho1, Mode.K1V)
    return _ratio(n_psi, n_tot, "cloning fidelity")


def unot_fidelity(ps: PostSelectedState, qubit: PolarizationQubit) -> float:
    """``Tr(rho2 n_2perp) / Tr(rho2 n_2)``."""
    rho2 = ps.reduced(2)
    n_perp = number_expectation(rho2, Mode.K2H, qubit.perp)
    n_tot = number_expectation(rho2, Mode.K2H) + number_expectation(rho2, Mode.K2V)
    return _ratio(n_perp, n_tot, "U-NOT fidelity")


def _rotated_populations(rho: DensityMatrix, qubit: PolarizationQubit, n: int) -> np.ndarray:
    """Populations of ``|m Psi, (n-m) Psi_perp>`` (index m) in a single-spatial-mode rho."""
    nh = rho.basis[:, 0]
    block = np.flatnonzero(rho.basis.sum(axis=1) == n)
    full = np.zeros((n + 1, n + 1), dtype=complex)
    h_counts = nh[block]
    full[np.ix_(h_counts, h_counts)] = rho.matrix[np.ix_(block, block)]
    d = rotation_block(qubit, n)
    return np.real(np.einsum("pm,pq,qm->m", d.conj(), full, d))


def ratio_R(ps: PostSelectedState, qubit: PolarizationQubit) -> float:
    """P(k1 in |2 Psi, 0>) / P(k1 in |1 Psi, 1 Psi_perp>)."""
    pops = _rotated_populations(ps.reduced(1), qubit, 2)
    return _ratio(pops[2], pops[1], "R")


def ratio_R_star(ps: PostSelectedState, qubit: PolarizationQubit) -> float:
    """``Tr(rho2 n_2perp) / Tr(rho2 n_2Psi)``."""
    rho2 = ps.reduced(2)
    return _ratio(
        number_expectation(rho2, Mode.K2H, qubit.perp),
        number_expectation(rho2, Mode.K2H, qubit.psi),
        "R*",
    )


def fidelity_from_ratio(R: float) -> float:
    if R < 0:
        raise ValueError(f"ratio must be nonnegative, got {R}")
    return (2 * R + 1) / (2 * R + 2)


def fidelity_star_from_ratio(R_star: float) -> float:
    if R_star < 0:
        raise ValueError(f"ratio must be nonnegative, got {R_star}")
    return R_star / (R_star + 1)


def entropy_pair(state: StateVector | PostSelectedState) -> tuple[float, float]:
    """Von Neumann entropies (bits) of the k1 and k2 reductions of a pure state."""
    if isinstance(state, PostSelectedState):
        return von_neumann_entropy(state.reduced(1)), von_neumann_entropy(state.reduced(2))
    state = state.normalized()
    return (
        von_neumann_entropy(reduced_density(state, 1)),
        von_neumann_entropy(reduced_density(state, 2)),
    )


def flipped_weight(state: StateVector, qubit: PolarizationQubit) -> float:
    """Unnormalized weight of k2 holding exactly one photon, in Psi_perp."""
    rotated = _to_measurement_frame(state, qubit)
    basis = rotated.space.basis
    mask = (basis[:, 2] == 0) & (basis[:, 3] == 1)
    return float(rotated.probabilities()[mask].sum())


def _to_measurement_frame(state: StateVector, qubit: PolarizationQubit) -> StateVector:
    return rotate_polarization(state, qubit.inverse())


def output_state(qubit: PolarizationQubit, g: float, order: str = "full",
                 truncation: Truncation = Truncation()) -> StateVector:
    """Amplifier output for an injected ``qubit``: ``order`` is "first" or "full"."""
    if order == "first":
        return first_order_output(qubit, g, truncation)
    if order == "full":
        return evolve(prepare_injected(qubit, truncation), g)
    raise ValueError(f"order must be 'first' or 'full', got {order!r}")


@dataclass(frozen=True)
class FidelityReport:
    F: float
    F_star: float
    R: float
    R_star: float
    S1: float
    S2: float
    qubit: PolarizationQubit
    g: float
    order: str = "full"
    success_probability: float = float("nan")


def fidelity_report(qubit: PolarizationQubit, g: float, order: str = "full",
                    truncation: Truncation = Truncation()) -> FidelityReport:
    """All figures of merit for one injected qubit; entropies are of the post-selected state."""
    ps = post_select_amplified(output_state(qubit, g, order, truncation))
    s1, s2 = entropy_pair(ps)
    return FidelityReport(
        F=cloning_fidelity(ps, qubit),
        F_star=unot_fidelity(ps, qubit),
        R=ratio_R(ps, qubit),
        R_star=ratio_R_star(ps, qubit),
        S1=s1,
        S2=s2,
        qubit=qubit,
        g=float(g),
        order=order,
        success_probability=ps.success_probability,
    )


@dataclass(frozen=True)
class UniversalityScan:
    reports: tuple[FidelityReport, ...]
    max_dev_F: float
    max_dev_F_star: float


def universality_scan(qubits: Sequence[PolarizationQubit], g: float, order: str = "first",
                      truncation: Truncation = Truncation()) -> UniversalityScan:
    if not qubits:
        raise ValueError("universality scan needs at least one qubit")
    reports = tuple(fidelity_report(q, g, order, truncation) for q in qubits)
    fs = [r.F for r in reports]
    fss = [r.F_star for r in reports]
    med_f, med_fs = statistics.median(fs), statistics.median(fss)
    return UniversalityScan(
        reports,
        max(abs(f - med_f) for f in fs),
        max(abs(f - med_fs) for f in fss),
    )
