"""Truncated bosonic Fock spaces and grand-canonical averages.

The grand-canonical derivative reuses the commuting-observable formula with
``K = H - mu N`` playing the Hamiltonian and ``H`` playing the observable;
``K' = H'`` because the number operator does not depend on ``lam``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .canonical import (
    COMMUTATOR_TOL,
    EnsembleContext,
    NonCommutingError,
    dA_dlambda_commuting,
    make_context,
    thermal_average,
)
from .family import OperatorFamily
from .linalg import as_hermitian, commutator_norm

MAX_FOCK_DIM = 4096


@dataclass(frozen=True)
class FockSpace:
    """Bosonic modes with a hard occupation cutoff per mode.

    ``basis`` lists occupation tuples in lexicographic order (mode 0 most
    significant), matching ``np.kron`` ordering of the single-mode factors.
    """

    modes: int
    cutoffs: tuple[int, ...]
    basis: tuple[tuple[int, ...], ...]
    annihilators: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def creators(self) -> tuple[np.ndarray, ...]:
        return tuple(a.T.copy() for a in self.annihilators)

    def number(self, mode: int) -> np.ndarray:
        """``a_i^dagger a_i``, built from the occupations so its entries are exact integers."""
        return np.diag(np.array([occ[mode] for occ in self.basis], dtype=float))

    @property
    def number_operator(self) -> np.ndarray:
        return np.diag(np.array([sum(occ) for occ in self.basis], dtype=float))


def _single_mode_annihilator(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1)


def build_boson_fock(modes: int, cutoff) -> FockSpace:
    """Construct the truncated Fock space of ``modes`` bosonic modes.

    ``cutoff`` is the maximum occupation, either one integer for every mode or
    a sequence with one entry per mode.
    """
    if modes < 1:
        raise ValueError("need at least one mode")
    cutoffs = (cutoff,) * modes if np.isscalar(cutoff) else tuple(cutoff)
    if len(cutoffs) != modes or any(int(c) != c or c < 1 for c in cutoffs):
        raise ValueError(f"cutoffs must be {modes} positive integers, got {cutoffs!r}")
    cutoffs = tuple(int(c) for c in cutoffs)
    dim = int(np.prod([c + 1 for c in cutoffs]))
    if dim > MAX_FOCK_DIM:
        raise ValueError(f"Fock space dimension {dim} exceeds the cap {MAX_FOCK_DIM}")
    basis = tuple(itertools.product(*(range(c + 1) for c in cutoffs)))
    ladders = []
    for i in range(modes):
        op = np.ones((1, 1))
        for j, c in enumerate(cutoffs):
            op = np.kron(op, _single_mode_annihilator(c) if i == j else np.eye(c + 1))
        op.setflags(write=False)
        ladders.append(op)
    return FockSpace(modes, cutoffs, basis, tuple(ladders))


def grand_family(fam: OperatorFamily, number_op, mu: float) -> OperatorFamily:
    """The family ``K(lam) = H(lam) - mu N`` with ``K' = H'``."""
    n_op = as_hermitian(number_op)
    return replace(
        fam,
        hamiltonian_at=lambda lam: fam.hamiltonian_at(lam) - mu * n_op,
        label=f"{fam.label}-{mu:g}N",
        closed_forms={},
    )


@dataclass(frozen=True)
class GrandContext:
    mu: float
    number_operator: np.ndarray
    inner: EnsembleContext


def make_grand_context(fam: OperatorFamily, number_op, mu: float, lam: float,
                       beta: float) -> GrandContext:
    kfam = grand_family(fam, number_op, mu)
    return GrandContext(float(mu), np.asarray(number_op), make_context(kfam, lam, beta))


def grand_average(gctx: GrandContext, a) -> float:
    """``[A]_G = tr(e^{-beta K} A) / Z_G``."""
    return thermal_average(gctx.inner, a)


def check_number_conserving(h, number_op) -> float:
    norm = commutator_norm(h, number_op)
    bound = COMMUTATOR_TOL * max(1.0, float(np.max(np.abs(h))) * float(np.max(np.abs(number_op))))
    if norm > bound:
        raise NonCommutingError(norm, bound)
    return norm


def dHG_dlambda_hft(fam: OperatorFamily, number_op, mu: float, lam: float, beta: float) -> float:
    """``[H'] + beta ([H][H'] - [H H'])`` in the grand-canonical ensemble.

    Raises
    ------
    NonCommutingError
        If ``H(lam)`` does not conserve particle number.
    """
    check_number_conserving(fam.H(lam), number_op)
    return dA_dlambda_commuting(grand_family(fam, number_op, mu), fam, lam, beta)


def free_boson_number_tail(beta: float, omega: float, mu: float, cutoff: int) -> float:
    """Truncation deficit of ``[N]_G`` for a single free mode with occupation cutoff ``C``.

    With ``x = e^{-beta (omega - mu)} < 1`` the truncated average is
    ``x / (1 - x) - (C + 1) x^{C+1} / (1 - x^{C+1})``; the second term is
    returned. It bounds ``|[N]_{2C} - [N]_C|`` because both truncations
    approach the untruncated value from below.

    >>> round(free_boson_number_tail(1.0, 1.0, 0.0, 1), 6)
    0.313035
    """
    x = np.exp(-beta * (omega - mu))
    if not x < 1.0:
        raise ValueError(f"need mu < omega for a convergent grand series, got mu={mu!r}, omega={omega!r}")
    xc = x ** (cutoff + 1)
    return float((cutoff + 1) * xc / (1.0 - xc))
