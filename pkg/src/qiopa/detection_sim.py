"""Monte Carlo model of the heralded 4-coincidence measurements.

Every trial is a heralded injection: the trigger detector D_T fires and one
photon in ``qubit`` arrives on k1. With probability ``overlap`` (set by the
pump-mirror position) it is temporally matched to the pump and seeds the
amplifier; otherwise the amplifier starts from vacuum and the injected
photon passes through as a distinguishable extra photon on k1.

Detected occupations are expressed in the measurement frame (the wave
plates rotate Psi to the first polarization label of each spatial mode).

Cloning configuration (PBS2 removed)::

    k1 -> 50:50 BS -> arm a: Psi -> D_a            (Psi_perp unmonitored)
                   -> arm b: Psi -> D_b, Psi_perp -> D_b*
    k2 -> D_2 (any polarization)
    C1 = D_2 & D_T & D_a & D_b,   C2 = D_2 & D_T & D_a & D_b*

U-NOT configuration (PBS2 restored, PBS1a/b removed)::

    k1 -> 50:50 BS -> D_a / D_b (any polarization)
    k2 -> Psi_perp -> D_2, Psi -> D_2*
    C1 = D_2 & D_T & D_a & D_b,   C2 = D_2* & D_T & D_a & D_b

Detectors are non-number-resolving with efficiency ``qe``: a detector hit
by ``k`` photons clicks with probability ``1 - (1 - dark)(1 - qe)^k``.

Random numbers come in fixed blocks of :data:`BLOCK_SIZE` trials. Block
``b`` of scan point ``s`` draws from
``np.random.SeedSequence(master_seed, spawn_key=(s, b))``, so counts depend
only on ``(setup, master_seed)``, never on how blocks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .cloning_metrics import fidelity_from_ratio, fidelity_star_from_ratio
from .fitting import GaussianFit, fit_gaussian
from .fock_core import StateVector, Truncation
from .opa_model import (
    PolarizationQubit,
    check_gain,
    evolve,
    prepare_injected,
    rotate_polarization,
)

__all__ = [
    "BLOCK_SIZE",
    "DETECTORS",
    "MeasurementMode",
    "InjectionModel",
    "ExperimentSetup",
    "ClickPattern",
    "CoincidenceCounts",
    "EstimateError",
    "measurement_distributions",
    "sample_occupation",
    "route_and_detect",
    "run_trials",
    "coincidence_probabilities",
    "expected_counts",
    "oracle_fidelity",
    "estimate_R",
    "fidelity_from_counts",
    "z_scan",
    "fit_gaussian",
    "fit_scan",
]

BLOCK_SIZE = 1 << 16
DETECTORS = ("D_T", "D_2", "D_2*", "D_a", "D_b", "D_b*")
DEFAULT_QE = 0.55


class MeasurementMode(str, Enum):
    CLONING = "cloning"
    UNOT = "unot"

    @property
    def detectors(self) -> tuple[str, ...]:
        if self is MeasurementMode.CLONING:
            return ("D_T", "D_2", "D_a", "D_b", "D_b*")
        return ("D_T", "D_2", "D_2*", "D_a", "D_b")

    @property
    def ratio_factor(self) -> float:
        # R = C1 / (2 C2) for the cloning sets; R* = C1 / C2 for U-NOT
        return 0.5 if self is MeasurementMode.CLONING else 1.0


class EstimateError(ValueError):
    pass


@dataclass(frozen=True)
class InjectionModel:
    """Pump/injection temporal overlap as a function of the mirror position."""

    z: float = 0.0
    z0: float = 0.0
    sigma_z: float = 1.0
    p_peak: float = 1.0

    def __post_init__(self):
        if not self.sigma_z > 0:
            raise ValueError("sigma_z must be positive")
        if not 0.0 <= self.p_peak <= 1.0:
            raise ValueError("p_peak must lie in [0, 1]")

    @property
    def overlap(self) -> float:
        return self.p_peak * math.exp(-((self.z - self.z0) ** 2) / (2 * self.sigma_z**2))

    def at(self, z: float) -> InjectionModel:
        return replace(self, z=float(z))


@dataclass(frozen=True)
class ExperimentSetup:
    mode: MeasurementMode = MeasurementMode.CLONING
    qubit: PolarizationQubit = PolarizationQubit(1, 0)
    g: float = 0.1
    detector_qe: float | Mapping[str, float] = DEFAULT_QE
    injection: InjectionModel = field(default_factory=InjectionModel)
    trials: int = 1_000_000
    master_seed: int = 0
    dark_count: float = 0.0
    truncation: Truncation = field(default_factory=Truncation)

    def __post_init__(self):
        object.__setattr__(self, "mode", MeasurementMode(self.mode))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if isinstance(self.detector_qe, Mapping):
            unknown = set(self.detector_qe) - set(DETECTORS)
            if unknown:
                raise ValueError(f"unknown detectors {sorted(unknown)}")
            qes = dict(self.detector_qe)
            object.__setattr__(self, "detector_qe", tuple(sorted(qes.items())))
        else:
            qes = {"*": self.detector_qe}
        if any(not 0.0 <= q <= 1.0 for q in qes.values()):
            raise ValueError("detector efficiencies must lie in [0, 1]")
        if not 0.0 <= self.dark_count <= 1.0:
            raise ValueError("dark_count must lie in [0, 1]")
        check_gain(self.g)

    def qe(self, detector: str) -> float:
        if isinstance(self.detector_qe, tuple):
            return dict(self.detector_qe).get(detector, DEFAULT_QE)
        return float(self.detector_qe)


@dataclass(frozen=True)
class ClickPattern:
    mode: MeasurementMode
    clicks: frozenset

    def __post_init__(self):
        extra = set(self.clicks) - set(self.mode.detectors)
        if extra:
            raise ValueError(f"detectors {sorted(extra)} are not present in {self.mode.value} mode")

    def __getitem__(self, detector: str) -> bool:
        return detector in self.clicks

    @property
    def set1(self) -> bool:
        return {"D_2", "D_T", "D_a", "D_b"} <= self.clicks

    @property
    def set2(self) -> bool:
        if self.mode is MeasurementMode.CLONING:
            return {"D_2", "D_T", "D_a", "D_b*"} <= self.clicks
        return {"D_2*", "D_T", "D_a", "D_b"} <= self.clicks


@dataclass(frozen=True)
class CoincidenceCounts:
    C1: int
    C2: int
    trials_run: int
    mode: MeasurementMode

    def __add__(self, other: CoincidenceCounts) -> CoincidenceCounts:
        if self.mode != other.mode:
            raise ValueError("cannot combine counts from different modes")
        return CoincidenceCounts(self.C1 + other.C1, self.C2 + other.C2,
                                 self.trials_run + other.trials_run, self.mode)


# ---------------------------------------------------------------------------
# output distributions


@lru_cache(maxsize=32)
def _distributions(qubit: PolarizationQubit, g: float, truncation: Truncation):
    back = qubit.inverse()
    seeded = rotate_polarization(evolve(prepare_injected(qubit, truncation), g), back)
    vacuum = rotate_polarization(evolve(StateVector.vacuum(truncation), g), back)
    basis = seeded.space.basis
    p_seeded = seeded.probabilities()
    p_vacuum = vacuum.probabilities()
    for p in (p_seeded, p_vacuum):
        p /= p.sum()
        p.setflags(write=False)
    return basis, p_seeded, p_vacuum, np.cumsum(p_seeded), np.cumsum(p_vacuum)


def measurement_distributions(setup: ExperimentSetup):
    """``(basis, p_seeded, p_vacuum)`` in the measurement frame.

    ``p_seeded`` is the output distribution when the injected photon seeds
    the amplifier; ``p_vacuum`` when it does not (the passing photon is not
    included there).
    """
    return _distributions(setup.qubit, float(setup.g), setup.truncation)[:3]


def sample_occupation(state: StateVector, rng: np.random.Generator) -> tuple[int, ...]:
    """Draw a basis occupation with Born-rule probability."""
    p = state.probabilities()
    total = float(p.sum())
    if abs(total - 1.0) > 1e-8:
        raise ValueError(f"state not normalized (weight {total:.12g})")
    idx = _draw(np.cumsum(p), rng.random())
    return state.space.tuples[int(idx)]


def _draw(cdf: np.ndarray, u):
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(idx, len(cdf) - 1)


# ---------------------------------------------------------------------------
# optics and detectors


def _click(rng, photons: np.ndarray, qe: float, dark: float) -> np.ndarray:
    p = 1.0 - (1.0 - dark) * (1.0 - qe) ** photons
    return rng.random(photons.shape) < p


def _detect(occ: np.ndarray, heralded: np.ndarray, setup: ExperimentSetup, rng) -> dict[str, np.ndarray]:
    """Route measurement-frame occupations ``(n, 4)`` and fire detectors."""
    n1_psi, n1_perp, n2_psi, n2_perp = occ.T
    dark = setup.dark_count
    clicks = {"D_T": heralded.copy()}
    if setup.mode is MeasurementMode.CLONING:
        to_a = rng.binomial(n1_psi, 0.5)
        perp_to_b = rng.binomial(n1_perp, 0.5)
        clicks["D_2"] = _click(rng, n2_psi + n2_perp, setup.qe("D_2"), dark)
        clicks["D_a"] = _click(rng, to_a, setup.qe("D_a"), dark)
        clicks["D_b"] = _click(rng, n1_psi - to_a, setup.qe("D_b"), dark)
        clicks["D_b*"] = _click(rng, perp_to_b, setup.qe("D_b*"), dark)
    else:
        n1 = n1_psi + n1_perp
        to_a = rng.binomial(n1, 0.5)
        clicks["D_2"] = _click(rng, n2_perp, setup.qe("D_2"), dark)
        clicks["D_2*"] = _click(rng, n2_psi, setup.qe("D_2*"), dark)
        clicks["D_a"] = _click(rng, to_a, setup.qe("D_a"), dark)
        clicks["D_b"] = _click(rng, n1 - to_a, setup.qe("D_b"), dark)
    return clicks


def _coincidences(clicks: dict[str, np.ndarray], mode: MeasurementMode):
    common = clicks["D_T"] & clicks["D_a"]
    if mode is MeasurementMode.CLONING:
        return common & clicks["D_2"] & clicks["D_b"], common & clicks["D_2"] & clicks["D_b*"]
    return common & clicks["D_2"] & clicks["D_b"], common & clicks["D_2*"] & clicks["D_b"]


def route_and_detect(occ, setup: ExperimentSetup, rng: np.random.Generator,
                     heralded: bool = True) -> ClickPattern:
    """Click pattern for one measurement-frame occupation ``(n1Psi, n1Perp, n2Psi, n2Perp)``."""
    arr = np.asarray(occ, dtype=np.int64).reshape(1, 4)
    clicks = _detect(arr, np.array([heralded]), setup, rng)
    return ClickPattern(setup.mode, frozenset(d for d, c in clicks.items() if c[0]))


# ---------------------------------------------------------------------------
# trials


def _block_rng(master_seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(stream, block)))


def _run_block(setup: ExperimentSetup, stream: int, block: int, n: int) -> tuple[int, int]:
    basis, _, _, cdf_seeded, cdf_vacuum = _distributions(setup.qubit, float(setup.g), setup.truncation)
    rng = _block_rng(setup.master_seed, stream, block)
    seeded = rng.random(n) < setup.injection.overlap
    u = rng.random(n)
    occ = np.where(
        seeded[:, None],
        basis[_draw(cdf_seeded, u)],
        basis[_draw(cdf_vacuum, u)] + np.array([1, 0, 0, 0]),
    )
    clicks = _detect(occ, np.ones(n, dtype=bool), setup, rng)
    c1, c2 = _coincidences(clicks, setup.mode)
    return int(c1.sum()), int(c2.sum())


def run_trials(setup: ExperimentSetup, *, workers: int = 1, stream: int = 0) -> CoincidenceCounts:
    """Simulate ``setup.trials`` heralded trials and tally the two coincidence sets."""
    measurement_distributions(setup)  # evaluate once before fanning out
    sizes = [min(BLOCK_SIZE, setup.trials - start) for start in range(0, setup.trials, BLOCK_SIZE)]
    jobs = [(setup, stream, b, n) for b, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _run_block(*job), jobs))
    else:
        results = [_run_block(*job) for job in jobs]
    return CoincidenceCounts(sum(r[0] for r in results), sum(r[1] for r in results),
                             setup.trials, setup.mode)


# ---------------------------------------------------------------------------
# exact enumeration


def _p_click(k: int, qe: float, dark: float) -> float:
    return 1.0 - (1.0 - dark) * (1.0 - qe) ** k


def _split(n: int):
    return [(j, math.comb(n, j) * 0.5**n) for j in range(n + 1)]


def _set_probabilities(occ: tuple[int, int, int, int], setup: ExperimentSetup) -> tuple[float, float]:
    n1_psi, n1_perp, n2_psi, n2_perp = occ
    dark = setup.dark_count
    q = setup.qe
    if setup.mode is MeasurementMode.CLONING:
        d2 = _p_click(n2_psi + n2_perp, q("D_2"), dark)
        ab = sum(w * _p_click(j, q("D_a"), dark) * _p_click(n1_psi - j, q("D_b"), dark)
                 for j, w in _split(n1_psi))
        a = sum(w * _p_click(j, q("D_a"), dark) for j, w in _split(n1_psi))
        bstar = sum(w * _p_click(k, q("D_b*"), dark) for k, w in _split(n1_perp))
        return d2 * ab, d2 * a * bstar
    n1 = n1_psi + n1_perp
    ab = sum(w * _p_click(j, q("D_a"), dark) * _p_click(n1 - j, q("D_b"), dark) for j, w in _split(n1))
    return (_p_click(n2_perp, q("D_2"), dark) * ab, _p_click(n2_psi, q("D_2*"), dark) * ab)


def coincidence_probabilities(setup: ExperimentSetup) -> tuple[float, float]:
    """Exact per-trial probabilities of the two coincidence sets.

    Enumerates every output occupation and every beam-splitter split instead
    of sampling; the Monte Carlo estimates converge to these values.
    """
    basis, p_seeded, p_vacuum = measurement_distributions(setup)
    eps = setup.injection.overlap
    p1 = p2 = 0.0
    for occ, ps, pv in zip(basis.tolist(), p_seeded, p_vacuum):
        if ps > 0 and eps > 0:
            s1, s2 = _set_probabilities(tuple(occ), setup)
            p1 += eps * ps * s1
            p2 += eps * ps * s2
        if pv > 0 and eps < 1:
            occ_v = (occ[0] + 1, occ[1], occ[2], occ[3])
            s1, s2 = _set_probabilities(occ_v, setup)
            p1 += (1 - eps) * pv * s1
            p2 += (1 - eps) * pv * s2
    return p1, p2


def expected_counts(setup: ExperimentSetup) -> tuple[float, float]:
    p1, p2 = coincidence_probabilities(setup)
    return p1 * setup.trials, p2 * setup.trials


def oracle_fidelity(setup: ExperimentSetup) -> tuple[float, float]:
    """(ratio, fidelity) that the count estimators converge to."""
    p1, p2 = coincidence_probabilities(setup)
    if p2 == 0:
        raise EstimateError("second coincidence set has zero probability")
    ratio = setup.mode.ratio_factor * p1 / p2
    f = fidelity_from_ratio(ratio) if setup.mode is MeasurementMode.CLONING else fidelity_star_from_ratio(ratio)
    return ratio, f


# ---------------------------------------------------------------------------
# estimators


def estimate_R(counts: CoincidenceCounts) -> tuple[float, float]:
    """Ratio estimate with Poisson standard error ``R sqrt(1/C1 + 1/C2)``.

    Cloning counts give ``R = C1 / (2 C2)``; U-NOT counts give ``R* = C1 / C2``.
    With ``C1 = 0`` the error uses one count in place of ``C1``.
    """
    if counts.C2 <= 0:
        raise EstimateError("C2 = 0: ratio undefined")
    k = counts.mode.ratio_factor
    r = k * counts.C1 / counts.C2
    if counts.C1 == 0:
        return 0.0, k / counts.C2
    return r, r * math.sqrt(1 / counts.C1 + 1 / counts.C2)


def fidelity_from_counts(counts: CoincidenceCounts) -> tuple[float, float]:
    r, sr = estimate_R(counts)
    if counts.mode is MeasurementMode.CLONING:
        return fidelity_from_ratio(r), sr / (2 * (r + 1) ** 2)
    return fidelity_star_from_ratio(r), sr / (r + 1) ** 2


# ---------------------------------------------------------------------------
# mirror scan


def z_scan(setup: ExperimentSetup, z_values: Sequence[float], *, workers: int = 1) -> list[tuple[float, int, int]]:
    """Run ``setup.trials`` trials at each mirror position."""
    if len(z_values) == 0:
        raise ValueError("z_scan needs at least one position")
    rows = []
    for i, z in enumerate(z_values):
        point = replace(setup, injection=setup.injection.at(z))
        counts = run_trials(point, workers=workers, stream=i + 1)
        rows.append((float(z), counts.C1, counts.C2))
    return rows


def fit_scan(rows: Sequence[tuple[float, int, int]]) -> tuple[GaussianFit, GaussianFit]:
    """Fit the signal set with a free Gaussian and the noise set at the same peak shape.

    Counts are weighted by their Poisson errors. The noise fit keeps the
    signal fit's center and width, so its amplitude tests for a peak at the
    resonance.
    """
    z = np.array([r[0] for r in rows], dtype=float)
    c1 = np.array([r[1] for r in rows], dtype=float)
    c2 = np.array([r[2] for r in rows], dtype=float)
    signal = fit_gaussian(z, c1, np.sqrt(np.maximum(c1, 1.0)))
    noise = fit_gaussian(z, c2, np.sqrt(np.maximum(c2, 1.0)),
                         fixed={"center": signal.center, "width": signal.width})
    return signal, noise
