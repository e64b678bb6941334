"""Quantum-injected parametric amplifier in the H/V lab frame.

The interaction is generated by ``G - G^dag`` with
``G = a_H^dag b_V^dag - a_V^dag b_H^dag`` (``a`` on k1, ``b`` on k2), so the
evolution operator for gain ``g`` is ``exp(g (G - G^dag))``. ``G`` is an
SU(2) singlet: rotating both spatial modes' polarizations by the same
special-unitary matrix leaves it unchanged, which is why the same form holds
in any ``Psi / Psi_perp`` frame.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .fock_core import (
    Mode,
    StateVector,
    Truncation,
    TruncationError,
    fock_space,
)

__all__ = [
    "PolarizationQubit",
    "H",
    "DIAG",
    "CIRC_LEFT",
    "NAMED_QUBITS",
    "random_qubit",
    "PerturbativeWarning",
    "ExpansionError",
    "check_gain",
    "InteractionGenerator",
    "build_generator",
    "expm_apply",
    "evolve",
    "prepare_injected",
    "first_order_output",
    "vacuum_first_order_output",
    "rotation_block",
    "rotate_polarization",
]

QUBIT_NORM_TOL = 1e-12
WARN_GAIN = 0.3
MAX_GAIN = 1.0


@dataclass(frozen=True)
class PolarizationQubit:
    """``|Psi> = alpha|H> + beta|V>``.

    The orthogonal companion is ``|Psi_perp> = e^{i perp_phase}(-conj(beta)|H>
    + conj(alpha)|V>)``. The phase only exists to check that nothing physical
    depends on that convention.
    """

    alpha: complex
    beta: complex
    perp_phase: float = 0.0

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        norm2 = abs(a) ** 2 + abs(b) ** 2
        if abs(norm2 - 1.0) > QUBIT_NORM_TOL:
            raise ValueError(f"qubit not normalized: |alpha|^2+|beta|^2 = {norm2!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "perp_phase", float(self.perp_phase))

    @classmethod
    def normalized(cls, alpha, beta) -> PolarizationQubit:
        n = math.hypot(abs(complex(alpha)), abs(complex(beta)))
        if n == 0:
            raise ValueError("zero polarization vector")
        return cls(complex(alpha) / n, complex(beta) / n)

    @property
    def psi(self) -> tuple[complex, complex]:
        return (self.alpha, self.beta)

    @property
    def perp(self) -> tuple[complex, complex]:
        ph = np.exp(1j * self.perp_phase)
        return (complex(-self.beta.conjugate() * ph), complex(self.alpha.conjugate() * ph))

    def unitary(self) -> np.ndarray:
        """2x2 matrix whose columns are Psi and Psi_perp (maps H->Psi, V->Psi_perp)."""
        return np.array([self.psi, self.perp]).T

    def inverse(self) -> PolarizationQubit:
        """The qubit whose rotation undoes this one's (for ``perp_phase == 0``)."""
        return PolarizationQubit(self.alpha.conjugate(), -self.beta)


H = PolarizationQubit(1, 0)
DIAG = PolarizationQubit(2**-0.5, 2**-0.5)
CIRC_LEFT = PolarizationQubit(2**-0.5, 1j * 2**-0.5)
NAMED_QUBITS = {"H": H, "diag": DIAG, "circ-left": CIRC_LEFT}


def random_qubit(rng: np.random.Generator) -> PolarizationQubit:
    """Haar-random qubit."""
    z = rng.normal(size=2) + 1j * rng.normal(size=2)
    return PolarizationQubit.normalized(z[0], z[1])


class PerturbativeWarning(UserWarning):
    pass


class ExpansionError(RuntimeError):
    """Taylor remainder bound cannot reach the requested tolerance."""


def check_gain(g: float, max_gain: float = MAX_GAIN) -> float:
    g = float(g)
    if not math.isfinite(g) or g < 0:
        raise ValueError(f"gain must be a finite nonnegative number, got {g!r}")
    if g > max_gain:
        raise ValueError(f"gain {g} above supported maximum {max_gain}")
    if g > WARN_GAIN:
        warnings.warn(
            f"gain {g} > {WARN_GAIN}: truncation error grows quickly", PerturbativeWarning, stacklevel=3
        )
    return g


@dataclass(frozen=True, eq=False)
class InteractionGenerator:
    """Real antisymmetric sparse matrix of ``G - G^dag`` on one truncation."""

    matrix: sp.csr_matrix
    truncation: Truncation
    # maps in-space states to the components G pushes past the cutoff
    overflow: sp.csr_matrix

    def norm_bound(self) -> float:
        # ||A||_2 <= sqrt(||A||_1 ||A||_inf), and the two agree for A = -A^T
        return _norm1(self.matrix)


@lru_cache(maxsize=16)
def build_generator(truncation: Truncation = Truncation()) -> InteractionGenerator:
    truncation.require_minimum()
    space = fock_space(truncation)
    ad = {m: space.creation_matrix(m) for m in Mode}
    g = ad[Mode.K1H] @ ad[Mode.K2V] - ad[Mode.K1V] @ ad[Mode.K2H]
    m = (g - g.T).tocsr()
    m.eliminate_zeros()
    return InteractionGenerator(m, truncation, _overflow_matrix(truncation))


def _overflow_matrix(truncation: Truncation) -> sp.csr_matrix:
    space = fock_space(truncation)
    targets: dict[tuple, int] = {}
    rows, cols, vals = [], [], []
    for shift, sign in (((1, 0, 0, 1), 1.0), ((0, 1, 1, 0), -1.0)):
        shifted = space.basis + np.array(shift)
        outside = space.indices_of(shifted) < 0
        for j in np.flatnonzero(outside):
            occ = tuple(shifted[j].tolist())
            c = sign * math.sqrt(occ[0] if shift[0] else occ[1]) * math.sqrt(occ[3] if shift[3] else occ[2])
            rows.append(targets.setdefault(occ, len(targets)))
            cols.append(j)
            vals.append(c)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(targets), space.dim))


def expm_apply(a, v: np.ndarray, t: float = 1.0, *, norm_bound: float | None = None,
               tol: float = 1e-12, max_terms: int = 40, return_path: bool = False):
    """``exp(t a) v`` for anti-Hermitian ``a`` by scaled truncated Taylor steps.

    The interval is cut into ``s`` steps with ``|t| ||a|| / s <= 1`` and the
    Taylor degree ``m`` is the smallest whose remainder bound keeps the total
    error at or below ``tol * ||v||``. Each step's remainder is bounded by
    ``h^(m+1) e^h / (m+1)!``; the exact propagator is unitary, so step errors
    add. Returns ``(w, bound)`` or, with ``return_path``, also the list of
    step-boundary vectors (including ``v`` and ``w``).
    """
    v = np.asarray(v, dtype=complex)
    vnorm = float(np.linalg.norm(v))
    theta = abs(t) * (norm_bound if norm_bound is not None else _norm1(a))
    steps = max(1, math.ceil(theta))
    h = theta / steps
    for m in range(1, max_terms + 1):
        r = h ** (m + 1) * math.exp(h) / math.factorial(m + 1)
        if steps * r < 0.5 and steps * r / (1 - steps * r) <= tol:
            break
    else:
        raise ExpansionError(f"remainder bound above {tol:g} with {max_terms} Taylor terms")
    bound = steps * r / (1 - steps * r) * vnorm
    dt = t / steps
    w = v.copy()
    path = [v.copy()]
    for _ in range(steps):
        term = w
        acc = w.copy()
        for k in range(1, m + 1):
            term = (a @ term) * (dt / k)
            acc += term
        w = acc
        if return_path:
            path.append(w.copy())
    return (w, bound, path) if return_path else (w, bound)


def _norm1(a) -> float:
    return float(np.max(np.asarray(abs(a).sum(axis=0)), initial=0.0))


def evolve(state: StateVector, g: float, *, strict: bool = False, leak_tol: float = 1e-6,
           max_gain: float = MAX_GAIN) -> StateVector:
    """``exp(g (G - G^dag)) |state>`` on the truncated space.

    The truncated dynamics is exactly unitary; what it misses is amplitude
    that would flow past the cutoff. That is estimated by integrating
    ``||(1-P) G psi(s)||`` over the gain (trapezoid over the Taylor step
    boundaries) and reported, squared, as added ``dropped_weight``. With
    ``strict`` an estimated amplitude error above ``leak_tol`` raises.
    """
    g = check_gain(g, max_gain)
    if g == 0.0:
        return state
    gen = build_generator(state.truncation)
    # at least 4 quadrature panels for the leakage estimate
    nb = gen.norm_bound()
    w, _, path = expm_apply(gen.matrix, state.amplitudes, g,
                            norm_bound=max(nb, 4.0 / g), return_path=True)
    flux = [float(np.linalg.norm(gen.overflow @ p)) for p in path]
    ds = g / (len(path) - 1)
    leak = ds * (sum(flux) - 0.5 * (flux[0] + flux[-1]))
    if strict and leak > leak_tol:
        raise TruncationError(
            f"estimated truncation error {leak:.3e} exceeds {leak_tol:.1e} at {state.truncation}"
        )
    return StateVector(w, state.truncation, state.dropped_weight + leak**2)


def prepare_injected(qubit: PolarizationQubit, truncation: Truncation = Truncation()) -> StateVector:
    """One photon in ``qubit`` on k1, vacuum on k2."""
    return StateVector.from_dict(
        {(1, 0, 0, 0): qubit.alpha, (0, 1, 0, 0): qubit.beta}, truncation
    )


def first_order_output(qubit: PolarizationQubit, g: float,
                       truncation: Truncation = Truncation()) -> StateVector:
    """Unnormalized ``|1,0;0,0> + g(sqrt2 |2,0;0,1> - |1,1;1,0>)`` in Psi/Psi_perp labels."""
    truncation.require_minimum()
    g = float(g)
    labelled = StateVector.from_dict(
        {(1, 0, 0, 0): 1.0, (2, 0, 0, 1): math.sqrt(2) * g, (1, 1, 1, 0): -g}, truncation
    )
    return rotate_polarization(labelled, qubit)


def vacuum_first_order_output(g: float, truncation: Truncation = Truncation(),
                              qubit: PolarizationQubit = H) -> StateVector:
    """Unnormalized ``|0,0;0,0> + g(|1,0;0,1> - |0,1;1,0>)`` in Psi/Psi_perp labels.

    The pair term is a polarization singlet, so the lab-frame result does not
    depend on ``qubit``.
    """
    truncation.require_minimum()
    labelled = StateVector.from_dict(
        {(0, 0, 0, 0): 1.0, (1, 0, 0, 1): float(g), (0, 1, 1, 0): -float(g)}, truncation
    )
    return rotate_polarization(labelled, qubit)


@lru_cache(maxsize=256)
def _rotation_block(u: tuple, n: int) -> np.ndarray:
    (u00, u01), (u10, u11) = u
    out = np.zeros((n + 1, n + 1), dtype=complex)
    for m in range(n + 1):
        # (u00 x + u10 y)^m (u01 x + u11 y)^(n-m), coefficients by power of x
        poly = np.array([1.0 + 0j])
        for _ in range(m):
            poly = np.convolve(poly, [u10, u00])
        for _ in range(n - m):
            poly = np.convolve(poly, [u11, u01])
        # poly[p] multiplies x^p y^(n-p)
        for p in range(n + 1):
            out[p, m] = poly[p] * math.sqrt(
                math.factorial(p) * math.factorial(n - p) / (math.factorial(m) * math.factorial(n - m))
            )
    return out


def rotation_block(qubit: PolarizationQubit, n: int) -> np.ndarray:
    """Action of the polarization rotation on the ``n``-photon states of one spatial mode.

    Entry ``[p, m]`` is ``<p, n-p| U |m, n-m>`` with the first label counting
    H photons; ``U`` sends H to Psi and V to Psi_perp.
    """
    u = qubit.unitary()
    return _rotation_block(tuple(map(tuple, u.tolist())), n)


def rotate_polarization(state: StateVector, qubit: PolarizationQubit) -> StateVector:
    """Apply the same polarization rotation (H->Psi, V->Psi_perp) to k1 and k2.

    Works sector by sector in the photon numbers of k1 and k2. If the
    per-mode cutoff removes part of a sector the rotated amplitude landing
    there is dropped and added to ``dropped_weight``.
    """
    space = state.space
    basis = space.basis
    n1 = basis[:, 0] + basis[:, 1]
    n2 = basis[:, 2] + basis[:, 3]
    out = np.zeros(space.dim, dtype=complex)
    lost = 0.0
    amps = state.amplitudes
    for s1, s2 in sorted(set(zip(n1[amps != 0].tolist(), n2[amps != 0].tolist()))):
        p = np.arange(s1 + 1)[:, None]
        q = np.arange(s2 + 1)[None, :]
        occ = np.stack(np.broadcast_arrays(p, s1 - p, q, s2 - q), axis=-1)
        idx = space.indices_of(occ)
        present = idx >= 0
        x = np.zeros((s1 + 1, s2 + 1), dtype=complex)
        x[present] = amps[idx[present]]
        y = rotation_block(qubit, s1) @ x @ rotation_block(qubit, s2).T
        out[idx[present]] = y[present]
        lost += float(np.sum(np.abs(y[~present]) ** 2))
    return StateVector(out, state.truncation, state.dropped_weight + lost)
