"""Registered operator families.

Random models draw from ``numpy.random.Generator(Philox(seed))`` (a 64-bit
counter-based generator), so a seed fixes every matrix bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .family import OperatorFamily, constant_family, linear_family, validate_family
from .grand import build_boson_fock
from .linalg import hermitize


def seeded_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """``(M + M^dagger) / 2`` with real and imaginary parts of ``M`` uniform in [-1, 1]."""
    re = rng.uniform(-1.0, 1.0, size=(dim, dim))
    im = rng.uniform(-1.0, 1.0, size=(dim, dim))
    return hermitize(re + 1j * im)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


# -- oscillator ---------------------------------------------------------------

def oscillator_matrices(M: int) -> tuple[np.ndarray, np.ndarray]:
    """``H0 = diag(n + 1/2)`` and the matrix of ``x^2`` in the first ``M`` number states."""
    n = np.arange(M, dtype=float)
    h0 = np.diag(n + 0.5)
    xsq = np.diag(n + 0.5)
    off = np.sqrt((n[:-2] + 1) * (n[:-2] + 2)) / 2
    xsq += np.diag(off, 2) + np.diag(off, -2)
    return h0, xsq


def _omega(lam: float) -> float:
    if not lam > -1:
        raise ValueError(f"oscillator requires lambda > -1, got {lam!r}")
    return math.sqrt(1.0 + lam)


def _check_beta(beta: float) -> None:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")


def oscillator_closed_form_H(lam: float, beta: float) -> float:
    """Thermal energy ``w (e^{bw} + 1) / (2 (e^{bw} - 1))`` with ``w = sqrt(1 + lam)``."""
    w = _omega(lam)
    _check_beta(beta)
    # (e^y + 1)/(e^y - 1) = 1/tanh(y/2)
    return w / (2 * math.tanh(beta * w / 2))


def oscillator_closed_form_Hprime(lam: float, beta: float) -> float:
    """Thermal average of ``x^2 / 2``: ``(e^{bw} + 1) / (4 w (e^{bw} - 1))``."""
    w = _omega(lam)
    _check_beta(beta)
    return 1.0 / (4 * w * math.tanh(beta * w / 2))


def oscillator_closed_form_Z(lam: float, beta: float) -> float:
    w = _omega(lam)
    _check_beta(beta)
    return 1.0 / (2 * math.sinh(beta * w / 2))


def oscillator_closed_form_dH(lam: float, beta: float) -> float:
    """``d/dlam`` of the thermal energy: ``coth(bw/2)/(4w) - (b/8) csch^2(bw/2)``."""
    w = _omega(lam)
    _check_beta(beta)
    y = beta * w / 2
    return 1.0 / (4 * w * math.tanh(y)) - beta / (8 * math.sinh(y) ** 2)


def oscillator_family(M: int = 128) -> OperatorFamily:
    """``H(lam) = H0 + lam x^2 / 2`` in the lambda-independent number basis."""
    if M < 2:
        raise ValueError(f"oscillator basis size must be >= 2, got {M}")
    h0, xsq = oscillator_matrices(M)
    hp = xsq / 2
    for m in (h0, hp):
        m.setflags(write=False)
    return OperatorFamily(
        dim=M,
        hamiltonian_at=lambda lam: h0 + lam * hp,
        derivative_at=lambda lam: hp,
        label="oscillator",
        domain=(-1.0, math.inf),
        params={"M": M},
        closed_forms={
            "Z": oscillator_closed_form_Z,
            "H": oscillator_closed_form_H,
            "Hprime": oscillator_closed_form_Hprime,
            "dH_dlambda_hft": oscillator_closed_form_dH,
        },
    )


# -- random and degenerate families -------------------------------------------

def random_hermitian_family(dim: int, seed: int, scale: float = 1.0) -> OperatorFamily:
    """``H(lam) = A + lam B``; ``A`` is drawn first, then ``B`` (scaled by ``scale``)."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    rng = seeded_rng(seed)
    a = random_hermitian(dim, rng)
    b = scale * random_hermitian(dim, rng)
    return linear_family(a, b, label="random", dim=dim, seed=seed, scale=scale)


def degenerate_family(multiplicities, seed: int, dim: int | None = None) -> OperatorFamily:
    """``H(lam) = U diag(e(lam)) U^dagger`` with exactly repeated eigenvalues.

    Block ``k`` has eigenvalue ``c_k + lam d_k`` repeated ``multiplicities[k]``
    times; ``c_k`` is uniform in [-2, 2], ``d_k`` uniform in [-1, 1], and ``U``
    is a seeded Haar-like unitary independent of ``lam``.
    """
    mult = [int(m) for m in multiplicities]
    if any(m < 1 for m in mult):
        raise ValueError(f"multiplicities must be positive, got {mult}")
    total = sum(mult)
    if dim is not None and dim != total:
        raise ValueError(f"multiplicities sum to {total}, expected dim {dim}")
    rng = seeded_rng(seed)
    u = random_unitary(total, rng)
    c = rng.uniform(-2.0, 2.0, size=len(mult))
    d = rng.uniform(-1.0, 1.0, size=len(mult))
    cs = np.repeat(c, mult)
    ds = np.repeat(d, mult)
    for arr in (u, cs, ds):
        arr.setflags(write=False)
    return OperatorFamily(
        dim=total,
        hamiltonian_at=lambda lam: hermitize((u * (cs + lam * ds)) @ u.conj().T),
        derivative_at=lambda lam: hermitize((u * ds) @ u.conj().T),
        label="degenerate",
        params={"multiplicities": tuple(mult), "seed": seed, "dim": total},
    )


def block_energies(fam: OperatorFamily, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues and multiplicities of a :func:`degenerate_family` member.

    Reconstructed from the seed, independently of any diagonalization.
    """
    mult = fam.params["multiplicities"]
    rng = seeded_rng(fam.params["seed"])
    random_unitary(sum(mult), rng)
    c = rng.uniform(-2.0, 2.0, size=len(mult))
    d = rng.uniform(-1.0, 1.0, size=len(mult))
    return c + lam * d, np.asarray(mult)


# -- fixtures with known commutation structure ----------------------------------

def pauli_family() -> OperatorFamily:
    """``sigma_x + lam sigma_z``."""
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.array([[1.0, 0.0], [0.0, -1.0]])
    return linear_family(sx, sz, label="pauli")


def commuting_pair(dim: int, seed: int) -> tuple[OperatorFamily, OperatorFamily]:
    """A Hamiltonian family and an observable family sharing a fixed eigenbasis.

    ``H(lam) = U diag(h0 + lam h1) U^dagger`` and
    ``A(lam) = U diag(a0 + lam a1 + lam^2 a2) U^dagger``.
    """
    rng = seeded_rng(seed)
    u = random_unitary(dim, rng)
    h0, h1, a0, a1, a2 = rng.uniform(-1.0, 1.0, size=(5, dim))

    def conj(diag):
        return hermitize((u * diag) @ u.conj().T)

    ham = OperatorFamily(dim, lambda lam: conj(h0 + lam * h1), lambda lam: conj(h1),
                         label="commuting-H", params={"dim": dim, "seed": seed})
    obs = OperatorFamily(dim, lambda lam: conj(a0 + lam * a1 + lam**2 * a2),
                         lambda lam: conj(a1 + 2 * lam * a2),
                         label="commuting-A", params={"dim": dim, "seed": seed})
    return ham, obs


def square_observable(fam: OperatorFamily) -> OperatorFamily:
    """``A = H^2`` with ``A' = H H' + H' H``; commutes with ``H`` for every family."""
    def a(lam):
        h = fam.hamiltonian_at(lam)
        return hermitize(h @ h)

    def da(lam):
        h = fam.hamiltonian_at(lam)
        hp = fam.derivative_at(lam)
        return hermitize(h @ hp + hp @ h)

    return OperatorFamily(fam.dim, a, da, label=f"({fam.label})^2", domain=fam.domain)


def fixed_observable(dim: int, seed: int) -> OperatorFamily:
    """A seeded random lambda-independent observable (generically not commuting with H)."""
    a = random_hermitian(dim, seeded_rng(seed + 7919))
    return constant_family(a, label="random-observable", dim=dim, seed=seed)


# -- bosons --------------------------------------------------------------------

def boson_hopping_family(cutoff: int = 6, omega1: float = 1.0, omega2: float = 1.3
                         ) -> tuple[OperatorFamily, np.ndarray]:
    """Two modes with hopping: ``w1 n1 + w2 n2 + lam (a1^dag a2 + a2^dag a1)``.

    Returns the family and the number operator.
    """
    fock = build_boson_fock(2, cutoff)
    a1, a2 = fock.annihilators
    free = omega1 * fock.number(0) + omega2 * fock.number(1)
    hop = a1.T @ a2 + a2.T @ a1
    n_op = fock.number_operator
    for m in (free, hop, n_op):
        m.setflags(write=False)
    fam = OperatorFamily(
        dim=fock.dim,
        hamiltonian_at=lambda lam: free + lam * hop,
        derivative_at=lambda lam: hop,
        label="boson_hopping",
        params={"cutoff": cutoff, "omega1": omega1, "omega2": omega2},
        number_operator=n_op,
    )
    return fam, n_op


def free_boson_family(cutoff: int = 40, omega: float = 1.0) -> tuple[OperatorFamily, np.ndarray]:
    """Single mode ``(omega + lam) a^dag a``."""
    fock = build_boson_fock(1, cutoff)
    n_op = fock.number_operator
    n_op.setflags(write=False)
    fam = OperatorFamily(
        dim=fock.dim,
        hamiltonian_at=lambda lam: (omega + lam) * n_op,
        derivative_at=lambda lam: n_op,
        label="free_boson",
        params={"cutoff": cutoff, "omega": omega},
        number_operator=n_op,
    )
    return fam, n_op


# -- registry ------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """A named model constructor with typed parameter defaults.

    ``seeded`` models take the run seed as their ``seed`` parameter.
    """

    name: str
    build: Callable[..., OperatorFamily]
    defaults: dict[str, Any] = field(default_factory=dict)
    description: str = ""
    seeded: bool = False
    validate: bool = True

    def make(self, params: dict[str, Any] | None = None, seed: int | None = None,
             validate: bool | None = None) -> OperatorFamily:
        merged = dict(self.defaults)
        for key, value in (params or {}).items():
            if key not in self.defaults:
                raise KeyError(f"model {self.name!r} has no parameter {key!r}; "
                               f"valid: {sorted(self.defaults)}")
            merged[key] = value
        kwargs = dict(merged)
        if self.seeded:
            kwargs["seed"] = 0 if seed is None else int(seed)
        fam = self.build(**kwargs)
        if self.validate if validate is None else validate:
            validate_family(fam)
        return fam


def _boson(cutoff, omega1, omega2):
    return boson_hopping_family(cutoff, omega1, omega2)[0]


def _free_boson(cutoff, omega):
    return free_boson_family(cutoff, omega)[0]


def _constant(dim, seed):
    return constant_family(random_hermitian(dim, seeded_rng(seed)), label="constant",
                           dim=dim, seed=seed)


REGISTRY: dict[str, ModelSpec] = {
    spec.name: spec
    for spec in (
        ModelSpec("oscillator", oscillator_family, {"M": 128},
                  "harmonic oscillator with x^2 coupling, number basis of size M"),
        ModelSpec("random", random_hermitian_family, {"dim": 6, "scale": 1.0},
                  "A + lam B with seeded random Hermitian A, B", seeded=True),
        ModelSpec("degenerate", lambda multiplicities, seed: degenerate_family(multiplicities, seed),
                  {"multiplicities": (3, 2, 1)},
                  "exactly degenerate spectrum U diag(c + lam d) U^dagger", seeded=True),
        ModelSpec("boson_hopping", _boson, {"cutoff": 6, "omega1": 1.0, "omega2": 1.3},
                  "two bosonic modes with number-conserving hopping"),
        ModelSpec("free_boson", _free_boson, {"cutoff": 40, "omega": 1.0},
                  "single bosonic mode (omega + lam) n"),
        ModelSpec("pauli", lambda: pauli_family(), {}, "sigma_x + lam sigma_z"),
        ModelSpec("constant", _constant, {"dim": 4}, "lambda-independent random Hermitian",
                  seeded=True),
    )
}
