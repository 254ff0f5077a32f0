"""Canonical-ensemble averages and their parameter and temperature derivatives.

All Boltzmann weights are shifted by the ground-state energy ``e0`` so that
nothing overflows; ``Z`` is carried as ``log_Z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .family import OperatorFamily, central_difference
from .linalg import (
    ScalarFunction,
    SpectralDecomposition,
    apply_scalar_function,
    as_hermitian,
    commutator_norm,
    frechet_exp,
    real_part,
    spectral_decompose,
    trace,
)

TOL_ABS = 1e-8
TOL_REL = 1e-6
COMMUTATOR_TOL = 1e-10
# Largest beta * spectral radius for which e^{beta H} is formed explicitly.
MAX_EXPONENT = 300.0


class NonCommutingError(ValueError):
    """The commuting-observable formula was called on a non-commuting pair."""

    def __init__(self, norm: float, bound: float):
        self.norm = norm
        super().__init__(
            f"[H, A] is not zero: max |HA - AH| = {norm:.3e} exceeds {bound:.3e}; "
            "use dA_dlambda_general for non-commuting observables"
        )


class ExponentialOverflowError(ValueError):
    pass


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0 or not math.isfinite(beta):
        raise ValueError(f"inverse temperature must satisfy beta > 0, got {beta!r}")
    return beta


@dataclass(frozen=True)
class EnsembleContext:
    """Thermal state of ``H(lam)`` at inverse temperature ``beta``.

    ``weights`` are the normalized Boltzmann probabilities of the eigenvalues
    of ``decomposition``; ``log_Z_shifted`` is ``log sum exp(-beta (e_i - e0))``.
    """

    beta: float
    lam: float
    decomposition: SpectralDecomposition
    weights: np.ndarray
    log_Z_shifted: float
    hamiltonian: np.ndarray = field(repr=False)
    derivative: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.decomposition.dim

    @property
    def e0(self) -> float:
        return float(self.decomposition.eigenvalues[0])

    @property
    def log_Z(self) -> float:
        return -self.beta * self.e0 + self.log_Z_shifted

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    @property
    def rho(self) -> np.ndarray:
        """The density matrix ``e^{-beta H} / Z``."""
        return self.decomposition.reconstruct(self.weights)


def context_from_operator(h, beta: float, lam: float = 0.0, dh=None) -> EnsembleContext:
    """Build an :class:`EnsembleContext` directly from a Hermitian matrix."""
    beta = _check_beta(beta)
    h = as_hermitian(h)
    dec = spectral_decompose(h)
    shifted = np.exp(-beta * (dec.eigenvalues - dec.eigenvalues[0]))
    total = math.fsum(shifted)
    weights = shifted / total
    weights.setflags(write=False)
    return EnsembleContext(beta, float(lam), dec, weights, math.log(total), h,
                           None if dh is None else as_hermitian(dh))


def make_context(fam: OperatorFamily, lam: float, beta: float) -> EnsembleContext:
    """Thermal context of ``fam`` at ``(lam, beta)``.

    Examples
    --------
    >>> import numpy as np
    >>> from hftstat.family import constant_family
    >>> ctx = make_context(constant_family(np.diag([0.0, 1.0])), 0.0, 1.0)
    >>> round(ctx.log_Z, 7)
    0.3132617
    """
    beta = _check_beta(beta)
    return context_from_operator(fam.H(lam), beta, lam, fam.dH(lam))


def _check_dim(ctx: EnsembleContext, a: np.ndarray) -> None:
    if a.shape != (ctx.dim, ctx.dim):
        raise ValueError(f"operator of shape {a.shape} does not match context dimension {ctx.dim}")


def _weighted_sum(weights: np.ndarray, values: np.ndarray, what: str) -> float:
    re = math.fsum(weights * values.real)
    im = math.fsum(weights * values.imag) if np.iscomplexobj(values) else 0.0
    return real_part(complex(re, im), what)


def thermal_average(ctx: EnsembleContext, a) -> float:
    """``tr(rho A)`` for a Hermitian observable ``A``."""
    a = np.asarray(a)
    _check_dim(ctx, a)
    v = ctx.decomposition.eigenvectors
    diag = np.einsum("ji,jk,ki->i", v.conj(), a, v)
    return _weighted_sum(ctx.weights, diag, "thermal average")


def mixed_average(ctx: EnsembleContext, a, b) -> float:
    """``tr(rho A B)``, evaluated in the eigenbasis of ``H``.

    Real whenever ``A`` and ``B`` are Hermitian and one of them commutes with ``H``,
    or the product is otherwise symmetric under the thermal trace.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    _check_dim(ctx, a)
    _check_dim(ctx, b)
    dec = ctx.decomposition
    at = dec.to_eigenbasis(a)
    bt = dec.to_eigenbasis(b)
    diag = np.einsum("ij,ji->i", at, bt)
    return _weighted_sum(ctx.weights, diag, "mixed average")


def energy_average(ctx: EnsembleContext) -> float:
    return math.fsum(ctx.weights * ctx.decomposition.eigenvalues)


def energy_mixed_average(ctx: EnsembleContext, b) -> float:
    """``<H B>`` computed as ``tr(B (H rho))``; ``H rho`` is diagonal in the eigenbasis."""
    b = np.asarray(b)
    _check_dim(ctx, b)
    v = ctx.decomposition.eigenvectors
    diag = np.einsum("ji,jk,ki->i", v.conj(), b, v)
    return _weighted_sum(ctx.weights * ctx.decomposition.eigenvalues, diag, "<H B>")


def partition_function(fam: OperatorFamily, lam: float, beta: float) -> float:
    return make_context(fam, lam, beta).Z


def average_of(fam: OperatorFamily, obs: OperatorFamily | None, lam: float, beta: float) -> float:
    """``<A(lam)>`` at ``(lam, beta)``; ``obs=None`` means ``A = H``."""
    ctx = make_context(fam, lam, beta)
    if obs is None:
        return energy_average(ctx)
    return thermal_average(ctx, obs.H(lam))


def dZ_dlambda(fam: OperatorFamily, lam: float, beta: float) -> float:
    """``-beta tr(H' e^{-beta H})``."""
    ctx = make_context(fam, lam, beta)
    return -beta * ctx.Z * thermal_average(ctx, ctx.derivative)


def _hft_terms(ctx: EnsembleContext) -> tuple[float, float, float]:
    hp = thermal_average(ctx, ctx.derivative)
    h = energy_average(ctx)
    hhp = energy_mixed_average(ctx, ctx.derivative)
    return h, hp, hhp


def dH_dlambda_hft(fam: OperatorFamily, lam: float, beta: float) -> float:
    """``<H'> + beta (<H><H'> - <H H'>)``."""
    ctx = make_context(fam, lam, beta)
    h, hp, hhp = _hft_terms(ctx)
    return hp + beta * (h * hp - hhp)


def dHprime_dbeta(fam: OperatorFamily, lam: float, beta: float) -> float:
    """``<H><H'> - <H H'>``, the temperature derivative of ``<H'>``."""
    h, hp, hhp = _hft_terms(make_context(fam, lam, beta))
    return h * hp - hhp


def dH_dlambda_beta_form(fam: OperatorFamily, lam: float, beta: float) -> float:
    """``<H'> + beta d<H'>/dbeta``."""
    hp = thermal_average(make_context(fam, lam, beta), fam.dH(lam))
    return hp + beta * dHprime_dbeta(fam, lam, beta)


def _commutation_bound(h: np.ndarray, a: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(h))) * float(np.max(np.abs(a))))
    return COMMUTATOR_TOL * scale


def dA_dlambda_commuting(fam: OperatorFamily, obs: OperatorFamily, lam: float, beta: float) -> float:
    """``<A'> + beta (<A><H'> - <A H'>)`` for an observable with ``[H, A] = 0``.

    Raises
    ------
    NonCommutingError
        If ``max|[H, A]|`` exceeds ``1e-10 * max(1, max|H| max|A|)``.
    """
    ctx = make_context(fam, lam, beta)
    a = obs.H(lam)
    norm = commutator_norm(ctx.hamiltonian, a)
    bound = _commutation_bound(ctx.hamiltonian, a)
    if norm > bound:
        raise NonCommutingError(norm, bound)
    ap = thermal_average(ctx, obs.dH(lam))
    av = thermal_average(ctx, a)
    hp = thermal_average(ctx, ctx.derivative)
    ahp = mixed_average(ctx, a, ctx.derivative)
    return ap + beta * (av * hp - ahp)


def _check_exponent(ctx: EnsembleContext) -> None:
    radius = float(np.max(np.abs(ctx.decomposition.eigenvalues)))
    if ctx.beta * radius > MAX_EXPONENT:
        raise ExponentialOverflowError(
            f"beta * spectral radius = {ctx.beta * radius:.1f} exceeds {MAX_EXPONENT:g}; "
            "e^(beta H) is not representable. Shift H by a constant (F is invariant "
            "under H -> H + cI) or lower beta"
        )


def F_operator(fam: OperatorFamily, lam: float, beta: float) -> np.ndarray:
    """The operator ``F`` with ``d/dlam e^{beta H} = F e^{beta H}``.

    ``F = L(beta H, beta H') e^{-beta H}`` where ``L`` is the Frechet derivative
    of the exponential, computed by the block method.
    """
    ctx = make_context(fam, lam, beta)
    _check_exponent(ctx)
    fr = frechet_exp(beta * ctx.hamiltonian, beta * ctx.derivative)
    dec = ctx.decomposition
    exp_minus = dec.reconstruct(np.exp(-beta * dec.eigenvalues))
    return fr.directional @ exp_minus


def F_relation_residual(fam: OperatorFamily, lam: float, beta: float) -> float:
    """``max|L(beta H, beta H') - F e^{beta H}| / max|e^{beta H}|``."""
    ctx = make_context(fam, lam, beta)
    _check_exponent(ctx)
    fr = frechet_exp(beta * ctx.hamiltonian, beta * ctx.derivative)
    f_op = F_operator(fam, lam, beta)
    resid = np.max(np.abs(fr.directional - f_op @ fr.exponential))
    return float(resid / np.max(np.abs(fr.exponential)))


def rho_F(ctx: EnsembleContext) -> np.ndarray:
    """``rho F = -(d/dlam e^{-beta H}) / Z``, formed without growing exponentials.

    Uses ``e^{-beta H} F = L(-beta (H - e0), beta H') e^{-beta e0}``, which keeps
    every matrix entry bounded by the shifted Boltzmann weights.
    """
    beta = ctx.beta
    x = -beta * (ctx.hamiltonian - ctx.e0 * np.eye(ctx.dim))
    fr = frechet_exp(x, beta * ctx.derivative)
    return fr.directional / math.exp(ctx.log_Z_shifted)


def dA_dlambda_general(fam: OperatorFamily, obs: OperatorFamily, lam: float, beta: float) -> float:
    """``<A'> + beta <A><H'> - <F A>`` for any observable."""
    ctx = make_context(fam, lam, beta)
    a = obs.H(lam)
    ap = thermal_average(ctx, obs.dH(lam))
    av = thermal_average(ctx, a)
    hp = thermal_average(ctx, ctx.derivative)
    fa = real_part(np.einsum("ij,ji->", rho_F(ctx), a), "<F A>")
    return ap + beta * av * hp - fa


@dataclass(frozen=True)
class IdentityReport:
    """Outcome of one identity check.

    ``lhs`` is the directly differentiated quantity (finite-difference oracle or
    the reference code path), ``rhs`` the identity's right-hand side.
    ``oracle`` is an independent reference for ``lhs`` when one exists (a closed
    form), otherwise equal to ``lhs``; ``oracle_kind`` names its provenance.
    """

    identity_name: str
    lhs: float
    rhs: float
    oracle: float
    abs_residual: float
    rel_residual: float
    passed: bool
    tol_abs: float
    tol_rel: float
    oracle_kind: str
    parameters: dict[str, Any]


def make_report(name: str, lhs: float, rhs: float, *, parameters: dict[str, Any],
                oracle: float | None = None, oracle_kind: str = "finite-difference",
                tol_abs: float = TOL_ABS, tol_rel: float = TOL_REL) -> IdentityReport:
    abs_res = abs(lhs - rhs)
    denom = abs(rhs)
    rel_res = abs_res / denom if denom > 0 else (0.0 if abs_res == 0 else math.inf)
    passed = bool(abs_res <= tol_abs or rel_res <= tol_rel)
    return IdentityReport(
        name, float(lhs), float(rhs), float(lhs if oracle is None else oracle),
        float(abs_res), float(rel_res), passed, tol_abs, tol_rel, oracle_kind, dict(parameters),
    )


def trace_of_function(fam: OperatorFamily, f: ScalarFunction, lam: float) -> float:
    dec = spectral_decompose(fam.H(lam))
    return real_part(trace(apply_scalar_function(dec, f)))


def verify_main_identity(fam: OperatorFamily, f: ScalarFunction, lam: float, beta: float,
                         parameters: dict[str, Any] | None = None) -> IdentityReport:
    """Compare ``d/dlam tr f(H)`` (finite differences) with ``tr[H' f'(H)]``."""
    _check_beta(beta)
    lhs = central_difference(lambda x: trace_of_function(fam, f, x), lam)
    dec = spectral_decompose(fam.H(lam))
    rhs = real_part(trace(fam.dH(lam) @ apply_scalar_function(dec, f.derivative)))
    params = {"lambda": lam, "beta": beta, "dim": fam.dim, "model": fam.label, "f": f.name}
    params.update(parameters or {})
    return make_report(f"main_trace[{f.name}]", lhs, rhs, parameters=params)
