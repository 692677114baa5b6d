import logging
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(os.path.dirname(__file__)))))

from ddspme.common import DimensionMismatchError, QuadratureError
from ddspme.spectral import (
    Field, NormSpace, QuadraturePolicy, SobolevScale, from_grid, gamma_transform, inner, make_explicit_operator,
    make_fractional_laplacian, norm, norm_squared, scale_apply, semigroup, shifted_scale_apply, to_grid
)

logging.basicConfig(level=logging.INFO)


def random_fields(op, count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, op.N))


# make_fractional_laplacian

def test_fractional_laplacian_spectra():
    assert make_fractional_laplacian(3, 1.0).lambdas == [0.0, 1.0, 1.0]
    assert make_fractional_laplacian(3, 0.5).lambdas == [0.0, 1.0, 1.0]
    np.testing.assert_allclose(make_fractional_laplacian(5, 0.5).lam, [0.0, 1.0, 1.0, 2.0, 2.0])
    op = make_fractional_laplacian(6, 0.75)
    assert op.lam[0] == 0.0
    np.testing.assert_allclose(op.lam[-1], 3.0 ** 1.5)


def test_fractional_laplacian_rejects_bad_input():
    with pytest.raises(ValueError, match='alpha outside'):
        make_fractional_laplacian(4, 1.5)
    with pytest.raises(ValueError, match='alpha outside'):
        make_fractional_laplacian(4, 0.0)
    with pytest.raises(ValueError):
        make_fractional_laplacian(0, 0.5)


def test_explicit_operator_and_json():
    op = make_explicit_operator([0.0, 3.0], label='two modes')
    again = type(op).model_validate_json(op.to_json())
    assert again.lambdas == op.lambdas
    assert again.label == op.label
    assert again.digest() == op.digest()
    with pytest.raises(ValueError):
        make_explicit_operator([0.0, -1.0])


# scale_apply / norm / semigroup

def test_scale_apply_examples():
    op = make_explicit_operator([0.0, 3.0])
    out = scale_apply(op, SobolevScale(s=-0.5), Field.basis(2, 1))
    assert isinstance(out, Field)
    np.testing.assert_allclose(out.coeffs, [0.0, 0.5])

    u = Field([1.5, -2.0])
    assert scale_apply(op, 0.0, u) == u

    op = make_explicit_operator([1.0, 1.0])
    back = scale_apply(op, -0.5, scale_apply(op, 0.5, u))
    np.testing.assert_allclose(back.coeffs, u.coeffs, rtol=1e-14)


def test_scale_apply_dimension_mismatch():
    op = make_explicit_operator([0.0, 3.0])
    with pytest.raises(DimensionMismatchError):
        scale_apply(op, 0.5, Field([1.0, 2.0, 3.0]))
    with pytest.raises(DimensionMismatchError):
        norm(op, NormSpace.L2, np.ones(3))


def test_norm_examples():
    op = make_explicit_operator([0.0, 3.0])
    u = Field([1.0, 1.0])
    assert norm(op, NormSpace.F12, u) == pytest.approx(np.sqrt(5.0))
    assert norm(op, 'F12dual', u) == pytest.approx(np.sqrt(1.25))
    assert norm(op, NormSpace.L2, u) == pytest.approx(np.sqrt(2.0))
    for space in NormSpace:
        assert norm(op, space, Field.zeros(2)) == 0.0


def test_semigroup_examples():
    op = make_explicit_operator([0.0, 1.0, 2.0])
    u = Field([0.3, -0.4, 0.5])
    assert semigroup(op, 0.0, u) == u
    half = semigroup(op, np.log(2.0), Field.basis(3, 1))
    np.testing.assert_allclose(half.coeffs, [0.0, 0.5, 0.0])
    unit = Field(u.coeffs / norm(op, NormSpace.L2, u))
    assert norm(op, NormSpace.L2, semigroup(op, 1.0, unit)) <= 1.0
    with pytest.raises(ValueError):
        semigroup(op, -0.1, u)


def test_field_validation():
    with pytest.raises(ValueError):
        Field([1.0, np.nan])
    with pytest.raises(DimensionMismatchError):
        Field(np.ones((2, 2)))
    u = Field([1.0, 2.0])
    assert (u + u) == Field([2.0, 4.0])
    assert (2.0 * u - u) == u
    with pytest.raises(ValueError):
        u.coeffs[0] = 5.0


# grid transform

def test_grid_transform_is_unitary():
    for N in (1, 2, 7, 8):
        op = make_fractional_laplacian(N, 0.5)
        X = random_fields(op, 20, seed=N)
        values = to_grid(op, X)
        np.testing.assert_allclose(np.mean(values ** 2, axis=-1), norm_squared(op, NormSpace.L2, X), rtol=1e-12)
        np.testing.assert_allclose(from_grid(op, values), X, atol=1e-12)


def test_grid_transform_basis_functions():
    op = make_fractional_laplacian(8, 1.0)
    nodes = 2.0 * np.pi * np.arange(8) / 8
    np.testing.assert_allclose(to_grid(op, Field.basis(8, 0).coeffs), np.ones(8), atol=1e-14)
    np.testing.assert_allclose(to_grid(op, Field.basis(8, 1).coeffs), np.sqrt(2.0) * np.cos(nodes), atol=1e-14)
    np.testing.assert_allclose(to_grid(op, Field.basis(8, 2).coeffs), np.sqrt(2.0) * np.sin(nodes), atol=1e-14)
    np.testing.assert_allclose(to_grid(op, Field.basis(8, 7).coeffs), np.cos(4.0 * nodes), atol=1e-14)


# gamma_transform

def test_gamma_transform_examples():
    op = make_explicit_operator([0.0, 3.0])
    out = gamma_transform(op, 1.0, Field.basis(2, 1))
    np.testing.assert_allclose(out.coeffs, [0.0, 0.5], atol=1e-10)
    op = make_explicit_operator([1.0])
    out = gamma_transform(op, 2.0, Field.basis(1, 0))
    np.testing.assert_allclose(out.coeffs, [0.5], rtol=1e-10)


def test_gamma_transform_matches_bessel_multiplier():
    for N in (8, 64):
        for alpha in (0.5, 1.0):
            op = make_fractional_laplacian(N, alpha)
            X = random_fields(op, 100, seed=N)
            np.testing.assert_allclose(gamma_transform(op, 1.0, X), scale_apply(op, -0.5, X), rtol=1e-8, atol=0)


def test_gamma_transform_general_order():
    op = make_explicit_operator([0.0, 1.0, 2.0])
    X = random_fields(op, 10)
    for r in (0.5, 1.0, 1.5, 3.0):
        np.testing.assert_allclose(gamma_transform(op, r, X), scale_apply(op, -r / 2.0, X), rtol=1e-8)


def test_gamma_transform_errors():
    op = make_explicit_operator([0.0, 1.0, 4.0, 9.0])
    with pytest.raises(ValueError):
        gamma_transform(op, 0.0, Field.zeros(4))
    with pytest.raises(QuadratureError):
        gamma_transform(op, 1.0, Field.basis(4, 3), QuadraturePolicy(nodes=2, stretch=0.0))


# invariants

def test_riesz_isometry():
    op = make_fractional_laplacian(16, 0.5)
    U = random_fields(op, 1000, seed=1)
    V = random_fields(op, 1000, seed=2)
    lhs = inner(op, NormSpace.F12DUAL, scale_apply(op, 1.0, U), scale_apply(op, 1.0, V))
    rhs = inner(op, NormSpace.F12, U, V)
    scale = norm(op, NormSpace.F12, U) * norm(op, NormSpace.F12, V)
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale)
    np.testing.assert_allclose(norm(op, NormSpace.F12DUAL, scale_apply(op, 1.0, U)), norm(op, NormSpace.F12, U),
                               rtol=1e-14)


def test_norm_sandwich_and_resolvent_contraction():
    op = make_fractional_laplacian(16, 0.75)
    U = random_fields(op, 1000, seed=3)
    dual = norm(op, NormSpace.F12DUAL, U)
    l2 = norm(op, NormSpace.L2, U)
    f12 = norm(op, NormSpace.F12, U)
    assert np.all(dual <= l2)
    assert np.all(l2 <= f12)
    assert np.all(norm(op, NormSpace.L2, scale_apply(op, -1.0, U)) <= l2)


def test_shifted_scale_monotone_in_shift():
    op = make_fractional_laplacian(8, 0.5)
    u = random_fields(op, 1, seed=4)[0]
    values = [np.sqrt(delta) * norm(op, NormSpace.L2, shifted_scale_apply(op, delta, -0.5, u))
              for delta in (1.0, 10.0, 100.0, 1000.0)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(norm(op, NormSpace.L2, u), rel=1e-2)
    with pytest.raises(ValueError):
        shifted_scale_apply(op, 0.0, -0.5, u)
