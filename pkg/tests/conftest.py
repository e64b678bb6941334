"""Shared fixtures and brute-force oracles.

The oracles here build states and operators from dictionaries of occupation
tuples, independently of the sparse machinery in ``qiopa.fock_core``.
"""

import itertools
import math

import numpy as np
import pytest

from qiopa.fock_core import Truncation

SMALL = Truncation(4, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def small():
    return SMALL


def brute_basis(per_mode, total):
    return sorted(
        occ for occ in itertools.product(range(per_mode + 1), repeat=4) if sum(occ) <= total
    )


def dict_create(state: dict, mode: int) -> dict:
    out = {}
    for occ, c in state.items():
        new = list(occ)
        new[mode] += 1
        out[tuple(new)] = out.get(tuple(new), 0) + c * math.sqrt(new[mode])
    return out


def dict_annihilate(state: dict, mode: int) -> dict:
    out = {}
    for occ, c in state.items():
        if occ[mode] == 0:
            continue
        new = list(occ)
        new[mode] -= 1
        out[tuple(new)] = out.get(tuple(new), 0) + c * math.sqrt(occ[mode])
    return out


def sector_generator(n_max: int, difference: int):
    """Dense ``G - G^dag`` on all states with ``n_k1 - n_k2 == difference``.

    Basis is every 4-tuple with total photons ``<= n_max`` in that sector; the
    generator conserves ``n_k1 - n_k2`` so this block is exact up to the
    photon-number cap.
    """
    basis = [
        occ for occ in itertools.product(range(n_max + 1), repeat=4)
        if sum(occ) <= n_max and occ[0] + occ[1] - occ[2] - occ[3] == difference
    ]
    index = {occ: i for i, occ in enumerate(basis)}
    m = np.zeros((len(basis), len(basis)))
    for j, occ in enumerate(basis):
        for (p, q), sign in (((0, 3), 1.0), ((1, 2), -1.0)):
            new = list(occ)
            new[p] += 1
            new[q] += 1
            i = index.get(tuple(new))
            if i is not None:
                m[i, j] += sign * math.sqrt(new[p] * new[q])
    return basis, m - m.T


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
