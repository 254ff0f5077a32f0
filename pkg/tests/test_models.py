import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hftstat.canonical import (
    dA_dlambda_general,
    dH_dlambda_beta_form,
    dH_dlambda_hft,
    dHprime_dbeta,
    energy_average,
    make_context,
    thermal_average,
)
from hftstat.models import (
    REGISTRY,
    block_energies,
    boson_hopping_family,
    degenerate_family,
    fixed_observable,
    oscillator_closed_form_dH,
    oscillator_closed_form_H,
    oscillator_closed_form_Hprime,
    oscillator_closed_form_Z,
    oscillator_family,
    oscillator_matrices,
    random_hermitian_family,
)

# frozen from 40-digit mpmath evaluations of the thermal oscillator averages
FROZEN = {
    (0.0, 1.0): (1.081976706869326, 0.5409883534346632, 0.08065155633076705, 0.9595173756674719),
    (3.0, 1.0): (1.3130352854993313, 0.16412941068741641, None, None),
}


def literal_H(lam, beta):
    w = math.sqrt(lam + 1)
    return w * (math.exp(beta * w) + 1) / (2 * (math.exp(beta * w) - 1))


def literal_Hprime(lam, beta):
    w = math.sqrt(lam + 1)
    return (math.exp(beta * w) + 1) / (4 * w * (math.exp(beta * w) - 1))


# -- oscillator ----------------------------------------------------------------

def test_oscillator_small_basis():
    fam = oscillator_family(2)
    np.testing.assert_array_equal(fam.H(0.0), np.diag([0.5, 1.5]))


def test_xsq_entries():
    _, xsq = oscillator_matrices(6)
    assert xsq[0, 2] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    assert xsq[0, 2] == pytest.approx(0.7071068, abs=1e-7)
    np.testing.assert_array_equal(np.diag(xsq), np.arange(6) + 0.5)
    rows, cols = np.nonzero(xsq)
    assert set(np.abs(rows - cols)) == {0, 2}
    np.testing.assert_array_equal(xsq, xsq.T)


def test_xsq_matches_ladder_algebra():
    m = 12
    a = np.diag(np.sqrt(np.arange(1, m + 2, dtype=float)), k=1)
    x = (a + a.T) / math.sqrt(2)
    full = (x @ x)[:m, :m]
    np.testing.assert_allclose(oscillator_matrices(m)[1], full, atol=1e-14)


def test_oscillator_exact_spectrum_at_lambda_three():
    evals = np.linalg.eigvalsh(oscillator_family(128).H(3.0))
    np.testing.assert_allclose(evals[:4], [1.0, 3.0, 5.0, 7.0], atol=1e-9)


def test_oscillator_rejects_small_basis_and_domain():
    with pytest.raises(ValueError, match=">= 2"):
        oscillator_family(1)
    for fn in (oscillator_closed_form_H, oscillator_closed_form_Hprime):
        with pytest.raises(ValueError, match="lambda > -1"):
            fn(-1.0, 1.0)
        with pytest.raises(ValueError, match="beta must be positive"):
            fn(0.0, 0.0)


@pytest.mark.parametrize("point", list(FROZEN))
def test_closed_form_frozen_values(point):
    h, hp, dh, z = FROZEN[point]
    assert oscillator_closed_form_H(*point) == pytest.approx(h, rel=1e-14)
    assert oscillator_closed_form_Hprime(*point) == pytest.approx(hp, rel=1e-14)
    if dh is not None:
        assert oscillator_closed_form_dH(*point) == pytest.approx(dh, rel=1e-13)
        assert oscillator_closed_form_Z(*point) == pytest.approx(z, rel=1e-14)


def test_closed_form_rounded_values():
    assert oscillator_closed_form_H(0.0, 1.0) == pytest.approx(1.0819767, abs=1e-7)
    assert oscillator_closed_form_H(3.0, 1.0) == pytest.approx((math.e**2 + 1) / (math.e**2 - 1), rel=1e-15)
    assert oscillator_closed_form_Hprime(0.0, 1.0) == pytest.approx(0.5409884, abs=1e-7)
    assert oscillator_closed_form_Hprime(3.0, 1.0) == pytest.approx(1 / (8 * math.tanh(1.0)), rel=1e-15)
    assert oscillator_closed_form_H(0.0, 50.0) == pytest.approx(0.5, abs=1e-20)


@given(st.floats(-0.95, 10), st.floats(0.05, 30))
@settings(max_examples=50, deadline=None)
def test_closed_forms_match_literal_exponentials(lam, beta):
    assert oscillator_closed_form_H(lam, beta) == pytest.approx(literal_H(lam, beta), rel=1e-12)
    assert oscillator_closed_form_Hprime(lam, beta) == pytest.approx(literal_Hprime(lam, beta), rel=1e-12)
    ratio = oscillator_closed_form_H(lam, beta) / (2 * (lam + 1))
    assert oscillator_closed_form_Hprime(lam, beta) == pytest.approx(ratio, rel=1e-14)


@given(st.floats(-0.9, 5), st.floats(0.1, 10))
@settings(max_examples=30, deadline=None)
def test_closed_form_derivative_matches_difference(lam, beta):
    h = 1e-5
    fd = (oscillator_closed_form_H(lam + h, beta) - oscillator_closed_form_H(lam - h, beta)) / (2 * h)
    assert oscillator_closed_form_dH(lam, beta) == pytest.approx(fd, rel=1e-6, abs=1e-9)


@pytest.fixture(scope="module")
def osc():
    return oscillator_family(128)


@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 3.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 5.0])
def test_matrix_oscillator_matches_closed_forms(osc, lam, beta):
    ctx = make_context(osc, lam, beta)
    assert energy_average(ctx) == pytest.approx(oscillator_closed_form_H(lam, beta), rel=1e-10)
    assert thermal_average(ctx, ctx.derivative) == pytest.approx(
        oscillator_closed_form_Hprime(lam, beta), rel=1e-10)
    assert abs(dH_dlambda_beta_form(osc, lam, beta) - oscillator_closed_form_dH(lam, beta)) <= 1e-8


def test_oscillator_beta_derivative_of_hprime(osc):
    y = 0.5
    assert dHprime_dbeta(osc, 0.0, 1.0) == pytest.approx(-1 / (8 * math.sinh(y) ** 2), rel=1e-10)


# -- random families -----------------------------------------------------------

def test_random_family_deterministic():
    a, b = random_hermitian_family(6, 42), random_hermitian_family(6, 42)
    for lam in (0.0, 1.0):
        np.testing.assert_array_equal(a.H(lam), b.H(lam))
        np.testing.assert_array_equal(a.dH(lam), b.dH(lam))
    assert not np.array_equal(a.H(0.0), random_hermitian_family(6, 43).H(0.0))


@pytest.mark.parametrize("seed", range(5))
def test_random_family_hermitian_and_noncommuting(seed):
    fam = random_hermitian_family(8, seed)
    for m in (fam.H(0.0), fam.dH(0.0)):
        assert np.max(np.abs(m - m.conj().T)) <= 1e-15
        assert np.max(np.abs(m.real)) <= 1.0 and np.max(np.abs(m.imag)) <= 1.0
    a, b = fam.H(0.0), fam.dH(0.0)
    assert np.max(np.abs(a @ b - b @ a)) > 0.1


def test_random_family_zero_scale_is_constant():
    fam = random_hermitian_family(5, 3, scale=0.0)
    assert dH_dlambda_hft(fam, 0.3, 1.0) == 0.0
    assert dHprime_dbeta(fam, 0.3, 1.0) == 0.0
    assert dA_dlambda_general(fam, fixed_observable(5, 1), 0.3, 1.0) == 0.0


def test_random_family_rejects_small_dim():
    with pytest.raises(ValueError):
        random_hermitian_family(1, 0)


# -- degenerate families ---------------------------------------------------------

@pytest.mark.parametrize("lam", [-0.7, 0.0, 1.3])
def test_degenerate_two_by_two_blocks(lam):
    fam = degenerate_family((2, 2), seed=3)
    evals = np.linalg.eigvalsh(fam.H(lam))
    assert abs(evals[1] - evals[0]) <= 1e-14 and abs(evals[3] - evals[2]) <= 1e-14
    assert evals[2] - evals[0] > 1e-3
    energies, mult = block_energies(fam, lam)
    np.testing.assert_allclose(np.sort(np.repeat(energies, mult)), evals, atol=1e-14)


def test_degenerate_multiplicity_mismatch():
    with pytest.raises(ValueError, match="sum to 6"):
        degenerate_family((3, 2, 1), seed=0, dim=7)
    with pytest.raises(ValueError):
        degenerate_family((2, 0), seed=0)


def test_degenerate_deterministic():
    np.testing.assert_array_equal(degenerate_family((3, 1), 9).H(0.4), degenerate_family((3, 1), 9).H(0.4))


# -- bosons ----------------------------------------------------------------------

@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_boson_partition_function_factorizes(beta):
    cutoff, w1, w2 = 6, 1.0, 1.3
    fam, _ = boson_hopping_family(cutoff, w1, w2)
    z1 = math.fsum(math.exp(-beta * w1 * n) for n in range(cutoff + 1))
    z2 = math.fsum(math.exp(-beta * w2 * n) for n in range(cutoff + 1))
    assert make_context(fam, 0.0, beta).Z == pytest.approx(z1 * z2, rel=1e-12)


def test_boson_single_particle_sector():
    fam, n_op = boson_hopping_family(1, 1.0, 1.3)
    sector = np.flatnonzero(np.diag(n_op) == 1)
    block = fam.H(0.4)[np.ix_(sector, sector)]
    # basis order (0,1), (1,0): mode-2 quantum first
    np.testing.assert_allclose(block, [[1.3, 0.4], [0.4, 1.0]], atol=1e-15)


# -- registry ------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_registry_models_are_deterministic(name):
    spec = REGISTRY[name]
    a, b = spec.make(seed=5), spec.make(seed=5)
    lam = 0.3
    np.testing.assert_array_equal(a.H(lam), b.H(lam))
    np.testing.assert_array_equal(a.dH(lam), b.dH(lam))
    assert spec.name == name


def test_registry_unknown_parameter():
    with pytest.raises(KeyError, match="no parameter 'N'"):
        REGISTRY["oscillator"].make({"N": 3})


def test_registry_parameter_override():
    assert REGISTRY["oscillator"].make({"M": 16}).dim == 16
    assert REGISTRY["degenerate"].make({"multiplicities": (4, 4)}, seed=2).dim == 8


def test_frozen_values_against_high_precision_sums():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40

    def energy(lam, beta):
        w = mpmath.sqrt(1 + lam)
        levels = lambda n: w * (n + mpmath.mpf(1) / 2)
        z = mpmath.nsum(lambda n: mpmath.exp(-beta * levels(n)), [0, mpmath.inf])
        return mpmath.nsum(lambda n: levels(n) * mpmath.exp(-beta * levels(n)), [0, mpmath.inf]) / z

    for point, (h, hp, dh, _) in FROZEN.items():
        lam, beta = map(mpmath.mpf, point)
        assert float(energy(lam, beta)) == pytest.approx(h, rel=1e-15)
        assert float(energy(lam, beta) / (2 * (1 + lam))) == pytest.approx(hp, rel=1e-15)
        if dh is not None:
            assert float(mpmath.diff(lambda x: energy(x, beta), lam)) == pytest.approx(dh, rel=1e-14)
