"""Finite-basis truncation ``H_M`` and convergence of traces as ``M`` grows."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .canonical import (
    dH_dlambda_hft,
    energy_average,
    make_context,
    trace_of_function,
)
from .family import OperatorFamily
from .linalg import ScalarFunction, apply_scalar_function, real_part, spectral_decompose, trace

QUANTITIES = ("Z", "H", "dH_dlambda_hft", "trace_f", "dtrace_f")


def truncate(fam: OperatorFamily, M: int) -> OperatorFamily:
    """Leading ``M x M`` principal block of ``H(lam)`` and ``H'(lam)``."""
    if not 1 <= M <= fam.dim:
        raise ValueError(f"truncation size M={M} outside [1, {fam.dim}]")
    if M == fam.dim:
        return fam
    return replace(
        fam,
        dim=M,
        hamiltonian_at=lambda lam: fam.hamiltonian_at(lam)[:M, :M],
        derivative_at=lambda lam: fam.derivative_at(lam)[:M, :M],
        label=fam.label,
        params={**fam.params, "M": M},
        number_operator=None,
    )


@dataclass(frozen=True)
class ConvergenceRow:
    M: int
    value: float
    error_vs_reference: float
    reference: float
    reference_kind: str


def evaluate_quantity(fam: OperatorFamily, quantity: str, lam: float, beta: float,
                      f: ScalarFunction | None = None) -> float:
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; valid: {', '.join(QUANTITIES)}")
    if quantity in ("trace_f", "dtrace_f") and f is None:
        raise ValueError(f"quantity {quantity!r} needs a function f")
    if quantity == "Z":
        return make_context(fam, lam, beta).Z
    if quantity == "H":
        return energy_average(make_context(fam, lam, beta))
    if quantity == "dH_dlambda_hft":
        return dH_dlambda_hft(fam, lam, beta)
    if quantity == "trace_f":
        return trace_of_function(fam, f, lam)
    dec = spectral_decompose(fam.H(lam))
    return real_part(trace(fam.dH(lam) @ apply_scalar_function(dec, f.derivative)))


def convergence_sweep(fam: OperatorFamily, quantity: str, lam: float, beta: float, Ms,
                      f: ScalarFunction | None = None) -> list[ConvergenceRow]:
    """Evaluate ``quantity`` on ``truncate(fam, M)`` for each ``M`` in ``Ms``.

    The reference is the family's registered closed form for ``quantity`` when
    there is one (``reference_kind="closed-form"``); otherwise the value at the
    largest ``M`` (``"self-reference"``).
    """
    Ms = [int(m) for m in Ms]
    if not Ms:
        raise ValueError("empty list of truncation sizes")
    if any(b <= a for a, b in zip(Ms, Ms[1:])):
        raise ValueError(f"truncation sizes must be strictly ascending, got {Ms}")
    if Ms[-1] > fam.dim or Ms[0] < 1:
        raise ValueError(f"truncation sizes must lie in [1, {fam.dim}], got {Ms}")
    values = [evaluate_quantity(truncate(fam, m), quantity, lam, beta, f) for m in Ms]
    closed = fam.closed_forms.get(quantity)
    if closed is not None:
        ref, kind = float(closed(lam, beta)), "closed-form"
    else:
        ref, kind = values[-1], "self-reference"
    return [ConvergenceRow(m, v, abs(v - ref), ref, kind) for m, v in zip(Ms, values)]
