import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symctl.composite import (
    CompositeFn,
    IdentityFn,
    boundary_system,
    build_composite,
    check_monotone,
    kappa_eval,
    sample,
    transition_eval,
)
from symctl.errors import InvalidInterval, InvalidRho, NegativeArgument, NonMonotone


@pytest.fixture(scope="module")
def kappa():
    return build_composite(1.0, 2.0, 0.1)


def boundary_residuals(f):
    va, da, dda = transition_eval(f.psi, f.a)
    vb, db, ddb = transition_eval(f.psi, f.b)
    return np.array([va - f.rho * f.a, da - f.rho, dda, vb - f.b, db - 1.0, ddb])


def test_boundary_conditions(kappa):
    assert np.max(np.abs(boundary_residuals(kappa))) <= 1e-9 * max(1.0, kappa.b)


def test_psi_matches_independent_solve(kappa):
    M, rhs = boundary_system(1.0, 2.0, 0.1)
    np.testing.assert_allclose(kappa.psi, np.linalg.solve(M, rhs), rtol=1e-10)
    # the closed form of this quintic has these coefficients
    np.testing.assert_allclose(kappa.psi, [-43.2, 166.6, -248.4, 178.2, -61.2, 8.1], rtol=1e-10)


def test_branches(kappa):
    np.testing.assert_allclose(kappa_eval(kappa, 0.5), (0.05, 0.1, 0.0))
    np.testing.assert_allclose(kappa_eval(kappa, 3.0), (3.0, 1.0, 0.0))
    assert kappa_eval(kappa, 0.0) == (0.0, 0.1, 0.0)


def test_transition_value(kappa):
    k, dk, ddk = kappa_eval(kappa, 1.5)
    psi = kappa.psi
    expected = sum(c * 1.5**i for i, c in enumerate(psi))
    assert k == pytest.approx(expected, rel=1e-12)
    assert kappa.rho * 1.5 < k < 1.5 + 1.0


@pytest.mark.parametrize("z0", [1.0, 2.0])
@pytest.mark.parametrize("which", [0, 1, 2])
def test_c2_stitch(kappa, z0, which):
    h = 1e-6
    lo = kappa_eval(kappa, z0 - h)[which]
    hi = kappa_eval(kappa, z0 + h)[which]
    assert abs(hi - lo) <= 1e-4


def test_derivatives_match_finite_differences(kappa):
    h = 1e-6
    for z in np.linspace(0.01, 3.99, 400):
        k_m, dk_m, _ = kappa_eval(kappa, z - h)
        k_p, dk_p, _ = kappa_eval(kappa, z + h)
        _, dk, ddk = kappa_eval(kappa, z)
        assert abs((k_p - k_m) / (2 * h) - dk) <= 1e-6 * max(1.0, abs(dk))
        # second differences amplify rounding; the transition curvature is O(10)
        assert abs((dk_p - dk_m) / (2 * h) - ddk) <= 1e-5 * max(1.0, abs(ddk))


def test_identity_branch_exact(kappa):
    for z in (2.0, 2.5, 10.0, 1e6):
        assert kappa_eval(kappa, z)[0] == z


def test_slope_range(kappa):
    z = np.linspace(kappa.a, kappa.b, 20001)
    slopes = np.array([kappa_eval(kappa, zi)[1] for zi in z])
    assert kappa.min_slope == pytest.approx(0.1)
    assert kappa.max_slope == pytest.approx(slopes.max(), rel=1e-6)
    assert kappa.max_slope > 1.0


def test_identity_fn():
    f = IdentityFn()
    assert kappa_eval(f, 0.7) == (0.7, 1.0, 0.0)
    assert (f.min_slope, f.max_slope) == (1.0, 1.0)


@pytest.mark.parametrize("a, b", [(2.0, 1.0), (1.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (0.1, 0.101)])
def test_invalid_interval(a, b):
    with pytest.raises(InvalidInterval):
        build_composite(a, b, 0.1)


@pytest.mark.parametrize("rho", [-0.1, 1.0, 1.5, np.nan])
def test_invalid_rho(rho):
    with pytest.raises(InvalidRho):
        build_composite(1.0, 2.0, rho)


def test_negative_argument(kappa):
    with pytest.raises(NegativeArgument):
        kappa_eval(kappa, -1e-3)


def test_rho_zero_allowed():
    f = build_composite(1.0, 2.0, 0.0)
    assert kappa_eval(f, 0.5) == (0.0, 0.0, 0.0)
    assert f.min_slope == 0.0


def test_monotone_check_rejects_decreasing_transition():
    # quintic with slope -1 inside (1, 2)
    bad = CompositeFn(1.0, 2.0, 0.1, (3.0, -1.0, 0.0, 0.0, 0.0, 0.0), 0.1, 1.0)
    with pytest.raises(NonMonotone):
        check_monotone(bad)


def test_monotone_check_rejects_negative_values():
    # positive slope but the quintic dips below zero
    bad = CompositeFn(1.0, 2.0, 0.1, (-5.0, 1.0, 0.0, 0.0, 0.0, 0.0), 0.1, 1.0)
    with pytest.raises(NonMonotone):
        check_monotone(bad)


def test_sample_shape(kappa):
    table = sample(kappa, 4.0, 41)
    assert table.shape == (41, 4)
    assert table[0, 0] == 0.0 and table[-1, 0] == 4.0


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.05, 5.0),
    st.floats(0.1, 5.0),
    st.floats(0.0, 0.95),
)
def test_construction_invariants(a, width, rho):
    b = a + width
    f = build_composite(a, b, rho)
    assert np.max(np.abs(boundary_residuals(f))) <= 1e-9 * max(1.0, b) * max(1.0, b / width) ** 3
    z = np.linspace(0.0, 2.0 * b, 200)
    vals = np.array([kappa_eval(f, zi) for zi in z])
    assert np.all(vals[:, 0] >= 0.0)
    assert np.all(vals[:, 1] >= f.min_slope - 1e-9)
    assert np.all(vals[:, 1] <= f.max_slope + 1e-9)
    if rho > 0:
        assert np.all(vals[:, 1] > 0.0)
