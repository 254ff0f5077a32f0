"""Dense Hermitian linear algebra.

Spectral decomposition, functions of operators, traces, commutators and the
Frechet derivative of the matrix exponential. Operators are plain numpy
arrays; every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

HERMITICITY_TOL = 1e-12
IMAG_TOL = 1e-10
# Eigenvalue pairs closer than this (relative) use the confluent divided difference.
CONFLUENT_TOL = 1e-8


class NotHermitianError(ValueError):
    """Raised when an operator fails the hermiticity check."""

    def __init__(self, asymmetry: float, scale: float):
        self.asymmetry = asymmetry
        super().__init__(
            f"operator is not Hermitian: max |A - A^dagger| = {asymmetry:.3e} "
            f"(max |A| = {scale:.3e}, tolerance {HERMITICITY_TOL:g} relative)"
        )


def _square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError(f"{name} has dimension 0")
    return a


def as_hermitian(a, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Validate ``a`` as a Hermitian operator and return it as a float/complex array.

    The check is ``max|a - a^dagger| <= tol * max|a|`` (an all-zero matrix passes).
    """
    a = _square(a, "operator")
    if not np.all(np.isfinite(a)):
        raise ValueError("operator has non-finite entries")
    a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64, copy=False)
    scale = float(np.max(np.abs(a)))
    asym = float(np.max(np.abs(a - a.conj().T)))
    if asym > tol * scale:
        raise NotHermitianError(asym, scale)
    return a


def hermitize(a) -> np.ndarray:
    """Return ``(a + a^dagger) / 2``."""
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and unitary eigenvector columns of a Hermitian operator."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self, values=None) -> np.ndarray:
        """``V diag(values) V^dagger``; ``values`` defaults to the eigenvalues."""
        if values is None:
            values = self.eigenvalues
        v = self.eigenvectors
        return (v * values) @ v.conj().T

    def to_eigenbasis(self, a) -> np.ndarray:
        """``V^dagger a V``."""
        v = self.eigenvectors
        return v.conj().T @ a @ v


def spectral_decompose(h) -> SpectralDecomposition:
    """Diagonalize a Hermitian operator.

    Raises
    ------
    NotHermitianError
        If ``h`` fails the hermiticity check.
    ValueError
        If ``h`` is empty, non-square or non-finite.
    """
    h = as_hermitian(h)
    evals, evecs = np.linalg.eigh(h)
    evals.setflags(write=False)
    evecs.setflags(write=False)
    return SpectralDecomposition(evals, evecs)


@dataclass(frozen=True)
class ScalarFunction:
    """A real function together with its analytic derivative.

    Both callables must accept numpy arrays elementwise.
    """

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    name: str = "f"


def boltzmann(beta: float) -> ScalarFunction:
    """``x -> exp(-beta x)``."""
    return ScalarFunction(
        lambda x: np.exp(-beta * x),
        lambda x: -beta * np.exp(-beta * x),
        name=f"exp(-{beta:g}x)",
    )


def energy_boltzmann(beta: float) -> ScalarFunction:
    """``x -> x exp(-beta x)``."""
    return ScalarFunction(
        lambda x: x * np.exp(-beta * x),
        lambda x: (1.0 - beta * x) * np.exp(-beta * x),
        name=f"x*exp(-{beta:g}x)",
    )


def polynomial(coeffs) -> ScalarFunction:
    """Polynomial with ``coeffs[k]`` multiplying ``x**k``."""
    p = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    dp = p.deriv()
    return ScalarFunction(p, dp, name=f"poly{len(coeffs) - 1}")


def check_scalar_function(
    f: ScalarFunction, lo: float, hi: float, rng: np.random.Generator, n: int = 20,
    rtol: float = 1e-6,
) -> float:
    """Compare ``f.derivative`` with a central difference of ``f.value`` on ``[lo, hi]``.

    Returns the worst relative discrepancy and raises ``ValueError`` if it
    exceeds ``rtol``.
    """
    xs = rng.uniform(lo, hi, size=n)
    h = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(xs))
    fd = (f.value(xs + h) - f.value(xs - h)) / (2 * h)
    exact = f.derivative(xs)
    scale = np.maximum(np.abs(exact), np.max(np.abs(f.value(xs))) * 1e-3 + 1e-300)
    worst = float(np.max(np.abs(fd - exact) / scale))
    if worst > rtol:
        raise ValueError(f"{f.name}: derivative disagrees with finite difference ({worst:.2e})")
    return worst


def apply_scalar_function(dec: SpectralDecomposition, f) -> np.ndarray:
    """Return ``f(H) = V diag(f(e)) V^dagger``.

    ``f`` may be a :class:`ScalarFunction` (its value is used) or a plain callable.
    """
    fn = f.value if isinstance(f, ScalarFunction) else f
    vals = np.asarray(fn(dec.eigenvalues), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise ValueError(f"function is not finite at eigenvalue {float(dec.eigenvalues[bad][0])!r}")
    return hermitize(dec.reconstruct(vals))


def trace(a) -> complex:
    """Sum of the diagonal of a square matrix."""
    a = _square(a)
    return np.trace(a)


def real_part(z, what: str = "trace") -> float:
    """Strip the imaginary part of a physically real quantity after checking it is negligible."""
    z = complex(z)
    if abs(z.imag) > IMAG_TOL * max(1.0, abs(z.real)):
        raise ValueError(f"{what} has imaginary part {z.imag:.3e} (real part {z.real:.6e})")
    return z.real


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def commutator_norm(a, b) -> float:
    """``max |AB - BA|``."""
    return float(np.max(np.abs(commutator(a, b))))


# Pade(13) coefficients and the scaling threshold theta_13 for the exponential.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0, 10559470521600.0, 670442572800.0, 33522128640.0,
    1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a degree-13 Pade kernel."""
    a = _square(a)
    a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64)
    n = a.shape[0]
    norm1 = float(np.max(np.sum(np.abs(a), axis=0)))
    if not np.isfinite(norm1):
        raise ValueError("matrix has non-finite entries")
    s = 0
    if norm1 > _THETA13:
        s = int(np.ceil(np.log2(norm1 / _THETA13)))
        a = a / 2.0**s
    b = _PADE13
    ident = np.eye(n, dtype=a.dtype)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


@dataclass(frozen=True)
class FrechetResult:
    """``exponential = e^X`` and ``directional = L(X, E) = d/ds e^{X + sE}`` at ``s = 0``."""

    exponential: np.ndarray
    directional: np.ndarray


def frechet_exp(x, e) -> FrechetResult:
    """Exponential and its Frechet derivative via the block-triangular method.

    Exponentiates ``[[X, E], [0, X]]``; the top-left block is ``e^X`` and the
    top-right block is ``L(X, E)``. ``E`` is rescaled to unit 1-norm before
    the exponential (``L`` is linear in ``E``) so the scaling step is driven by
    ``X``.
    """
    x = _square(x, "X")
    e = _square(e, "E")
    if x.shape != e.shape:
        raise ValueError(f"dimension mismatch: X is {x.shape}, E is {e.shape}")
    n = x.shape[0]
    enorm = float(np.max(np.sum(np.abs(e), axis=0)))
    t = 1.0 / enorm if enorm > 0 else 1.0
    dtype = np.result_type(x, e, np.float64)
    block = np.zeros((2 * n, 2 * n), dtype=dtype)
    block[:n, :n] = x
    block[n:, n:] = x
    block[:n, n:] = t * e
    big = expm(block)
    return FrechetResult(big[:n, :n].copy(), big[:n, n:] / t)


def frechet_exp_spectral(x, e) -> FrechetResult:
    """Divided-difference Frechet derivative of the exponential for Hermitian ``X``.

    Independent of :func:`frechet_exp`; used to cross-validate it.
    """
    dec = spectral_decompose(x)
    e = np.asarray(e)
    if e.shape != x.shape:
        raise ValueError(f"dimension mismatch: X is {np.shape(x)}, E is {e.shape}")
    lam = dec.eigenvalues
    diff = lam[:, None] - lam[None, :]
    expl = np.exp(lam)
    confluent = np.abs(diff) <= CONFLUENT_TOL * np.maximum(1.0, np.abs(lam))[:, None]
    safe = np.where(confluent, 1.0, diff)
    # e^{l_j} expm1(l_i - l_j) / (l_i - l_j) avoids cancellation for close pairs.
    phi = np.where(confluent, expl[:, None], expl[None, :] * np.expm1(diff) / safe)
    v = dec.eigenvectors
    directional = v @ (phi * dec.to_eigenbasis(e)) @ v.conj().T
    return FrechetResult(dec.reconstruct(expl), directional)
