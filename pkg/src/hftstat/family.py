"""Parameter-dependent operator families and finite-difference oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np

from .linalg import as_hermitian

CBRT_EPS = float(np.cbrt(np.finfo(float).eps))
# Relative disagreement between step h and h/2 estimates that triggers Richardson.
RICHARDSON_TRIGGER = 1e-7


@dataclass(frozen=True)
class OperatorFamily:
    """A differentiable map ``lam -> H(lam)`` with an analytic derivative channel.

    ``closed_forms`` maps quantity names (``"Z"``, ``"H"``, ``"Hprime"``,
    ``"dH_dlambda_hft"``) to callables ``(lam, beta) -> float`` giving exact
    infinite-basis values, when known. ``number_operator`` is set for
    number-conserving Fock-space models.
    """

    dim: int
    hamiltonian_at: Callable[[float], np.ndarray]
    derivative_at: Callable[[float], np.ndarray]
    label: str
    domain: tuple[float, float] = (-math.inf, math.inf)
    params: Mapping[str, Any] = field(default_factory=dict)
    closed_forms: Mapping[str, Callable[[float, float], float]] = field(default_factory=dict)
    number_operator: np.ndarray | None = None

    def H(self, lam: float) -> np.ndarray:
        self._check_domain(lam)
        return as_hermitian(self.hamiltonian_at(lam))

    def dH(self, lam: float) -> np.ndarray:
        self._check_domain(lam)
        return as_hermitian(self.derivative_at(lam))

    def _check_domain(self, lam: float) -> None:
        lo, hi = self.domain
        if not lo < lam < hi:
            raise ValueError(f"lambda={lam!r} outside the domain ({lo}, {hi}) of {self.label}")

    def shifted(self, c: float) -> "OperatorFamily":
        """The gauge-shifted family ``H(lam) + c I`` (derivative unchanged)."""
        ident = np.eye(self.dim)
        return replace(
            self,
            hamiltonian_at=lambda lam: self.hamiltonian_at(lam) + c * ident,
            label=f"{self.label}+{c:g}I",
            closed_forms={},
        )


def linear_family(a, b, label: str = "linear", **params) -> OperatorFamily:
    """``H(lam) = A + lam B``."""
    a = as_hermitian(a)
    b = as_hermitian(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    a.setflags(write=False)
    b.setflags(write=False)
    return OperatorFamily(
        dim=a.shape[0],
        hamiltonian_at=lambda lam: a + lam * b,
        derivative_at=lambda lam: b,
        label=label,
        params=params,
    )


def constant_family(a, label: str = "constant", **params) -> OperatorFamily:
    """A family with no lambda dependence."""
    a = as_hermitian(a)
    return linear_family(a, np.zeros_like(a), label=label, **params)


def default_step(x: float) -> float:
    return CBRT_EPS * max(1.0, abs(x))


def central_difference(fn: Callable[[float], float], x: float, h: float | None = None) -> float:
    """Central-difference derivative of a scalar function.

    Uses step ``h`` (default ``cbrt(eps) * max(1, |x|)``) and also step ``h/2``;
    when the two disagree by more than 1e-7 relative, returns the Richardson
    combination ``(4 D(h/2) - D(h)) / 3`` instead of ``D(h)``.
    """
    if h is None:
        h = default_step(x)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    coarse = (fn(x + h) - fn(x - h)) / (2 * h)
    fine = (fn(x + h / 2) - fn(x - h / 2)) / h
    if abs(coarse - fine) > RICHARDSON_TRIGGER * max(abs(coarse), abs(fine)):
        return (4 * fine - coarse) / 3
    return coarse


def fd_family_derivative(fam: OperatorFamily, lam: float, h: float | None = None) -> np.ndarray:
    """``(H(lam + h) - H(lam - h)) / 2h``."""
    if h is None:
        h = default_step(lam)
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    return (fam.H(lam + h) - fam.H(lam - h)) / (2 * h)


def validate_family(fam: OperatorFamily, lams=None, rtol: float = 1e-6) -> None:
    """Check the analytic derivative channel against finite differences.

    Samples 5 points of the domain unless ``lams`` is given. Raises
    ``ValueError`` on the first disagreement.
    """
    if lams is None:
        lo, hi = fam.domain
        lo = max(lo, -2.0)
        hi = min(hi, 2.0)
        lams = np.linspace(lo, hi, 7)[1:-1]
    for lam in lams:
        exact = fam.dH(float(lam))
        fd = fd_family_derivative(fam, float(lam))
        if exact.shape != (fam.dim, fam.dim):
            raise ValueError(f"{fam.label}: derivative has shape {exact.shape}, expected dim {fam.dim}")
        err = float(np.max(np.abs(fd - exact)))
        scale = max(1.0, float(np.max(np.abs(exact))))
        if err > rtol * scale:
            raise ValueError(
                f"{fam.label}: analytic derivative disagrees with finite difference at "
                f"lambda={lam:g} (max error {err:.3e})"
            )
