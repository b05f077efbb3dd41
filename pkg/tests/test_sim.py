import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symctl import _kernel
from symctl.composite import kappa_eval
from symctl.control import Variant
from symctl.errors import Diverged, GridMismatch, InvalidD, ValidationError
from symctl.plant import PlantSpec, ReferenceSignal, TrueUncertainty, total_uncertainty
from symctl.scenarios import nonparametric_config, parametric_config
from symctl.sim import (
    ClosedLoop,
    SimState,
    StateLayout,
    Trajectory,
    bound_constants,
    bound_for_config,
    energy_V,
    metrics,
    nominal_config,
    oracle_uf_dot,
    rhs,
    rk4_step,
    simulate,
    validate_config,
)

ALL_VARIANTS = list(Variant)


def config_for(variant, base=parametric_config, **sim):
    cfg = base(**sim).replace(variant=variant)
    if variant is Variant.STANDARD_ADAPTIVE_LEAKAGE:
        cfg = cfg.with_params(beta2=1.0)
    return cfg


def random_state(loop, rng, scale=0.5):
    y = rng.normal(scale=scale, size=loop.layout.size)
    return y


# --------------------------------------------------------------------------
# rk4


def test_rk4_zero_derivative():
    s = np.array([1.0, -2.0])
    assert np.array_equal(rk4_step(lambda t, s: np.zeros_like(s), 0.0, s, 0.1), s)


def test_rk4_exponential_decay():
    s1 = rk4_step(lambda t, s: -s, 0.0, np.array([1.0]), 0.1)
    assert abs(s1[0] - math.exp(-0.1)) <= 1e-7
    assert s1[0] == pytest.approx(0.9048375, abs=1e-7)


def test_rk4_linear_matches_taylor_through_fourth_order(rng):
    A = rng.normal(size=(3, 3))
    s = rng.normal(size=3)
    h = 0.05
    series = s.copy()
    term = s.copy()
    for k in range(1, 5):
        term = h * A @ term / k
        series = series + term
    np.testing.assert_allclose(rk4_step(lambda t, y: A @ y, 0.0, s, h), series, rtol=1e-13, atol=1e-14)


def test_rk4_rejects_bad_step():
    with pytest.raises(ValueError):
        rk4_step(lambda t, s: s, 0.0, np.ones(1), 0.0)


def test_rk4_global_order(rng):
    # scalar nonlinear ODE with a known solution: s' = -s^2, s(0) = 1 -> 1 / (1 + t)
    def run(dt):
        s = np.array([1.0])
        for k in range(int(round(1.0 / dt))):
            s = rk4_step(lambda t, y: -y * y, k * dt, s, dt)
        return abs(s[0] - 0.5)

    ratio = run(0.1) / run(0.05)
    assert ratio > 12.0


# --------------------------------------------------------------------------
# layout and right-hand side


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 2), st.integers(0, 6), st.booleans(), st.data())
def test_layout_round_trip(n, m, p, s, oracle, data):
    lay = StateLayout(n, m, p, s, oracle)
    seed = data.draw(st.integers(0, 2**32 - 1))
    y = np.random.default_rng(seed).normal(size=lay.size)
    assert np.array_equal(lay.flatten(lay.unflatten(y)), y)
    st_ = lay.unflatten(y)
    assert st_.W_hat.shape == (s + m, m) and st_.Lambda_hat.shape == (m, m)
    assert (st_.uf_oracle is not None) == oracle


def test_nominal_loop_matches_reference_model():
    cfg = nominal_config(parametric_config())
    x = np.array([0.4, -0.3])
    st_ = SimState(x, x.copy(), np.array([0.7]), np.zeros(2), np.zeros(1), np.zeros((0 + 1, 1)), np.zeros((1, 1)))
    d = rhs(cfg, 3.0, st_)
    np.testing.assert_allclose(d.x, d.x_n, atol=1e-15)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_initial_derivative_is_quiet(variant):
    cfg = config_for(variant)
    loop = ClosedLoop(cfg)
    y0 = loop.layout.initial(cfg.plant.x0)
    dy, sig = loop.evaluate(y0, np.ones(1))
    for name in ("e", "u_f", "u_g", "u_a"):
        assert np.all(sig[name] == 0.0), name
    assert np.all(dy[loop.layout.slices["W_hat"]] == 0.0)
    assert np.all(dy[loop.layout.slices["Lambda_hat"]] == 0.0)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
@pytest.mark.parametrize("base", [parametric_config, nonparametric_config])
def test_kernel_matches_numpy_derivative(variant, base, rng):
    cfg = config_for(variant, base, track_oracle=True)
    loop = ClosedLoop(cfg)
    args = loop.kernel_args()[3:]
    for _ in range(20):
        y = random_state(loop, rng)
        r = rng.choice([-1.0, 1.0])
        ref, sig = loop.evaluate(y, np.full(1, r))
        buf = np.zeros(6 * loop.m + loop.n)
        got = _kernel._derivative(y, r, *args, buf)
        np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-13)
        flat = np.concatenate([sig[k] for k in ("u", "u_n", "u_f", "u_a", "u_g", "e", "pi")])
        np.testing.assert_allclose(buf, flat, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("variant", [Variant.SYMBIOTIC_PARAMETRIC, Variant.STANDARD_ADAPTIVE_LEAKAGE])
def test_compiled_and_numpy_runs_agree(variant):
    cfg = config_for(variant, t_final=2.0, record_stride=50)
    a = simulate(cfg)
    b = simulate(cfg, compiled=False)
    np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-13)
    for k in a.signals:
        np.testing.assert_allclose(a.signals[k], b.signals[k], rtol=0, atol=1e-12, equal_nan=True)


def test_single_step_oracle_agreement(rng):
    # start both fixed-gain forms from the same u_f and take one step
    cfg = config_for(Variant.FIXED_GAIN, dt=1e-2, track_oracle=True)
    loop = ClosedLoop(cfg)
    y = random_state(loop, rng, 0.2)
    sl = loop.layout.slices
    x = y[sl["x"]]
    u_f = cfg.params.alpha * loop.B_i @ (y[sl["q"]] - (x - loop.x0)) + y[sl["qg"]]
    y[sl["uf_oracle"]] = u_f
    y1 = rk4_step(lambda t, yy: loop.derivative(yy, np.ones(1)), 0.0, y, cfg.dt)
    _, sig = loop.evaluate(y1, np.ones(1))
    assert abs(sig["u_f"][0] - y1[sl["uf_oracle"]][0]) <= 1e-9


# --------------------------------------------------------------------------
# oracle and energy


def test_oracle_root_and_limits():
    cfg = parametric_config()
    x = np.array([0.5, -0.2])
    u_n = np.array([0.3])
    pi = total_uncertainty(cfg.plant, x, u_n)
    zero = np.zeros(1)
    assert oracle_uf_dot(cfg.plant, 3.0, -pi, zero, u_n, x, zero) == pytest.approx([0.0])
    assert oracle_uf_dot(cfg.plant, 0.0, np.ones(1), zero, u_n, x, np.array([0.7])) == pytest.approx([0.7])
    # x = 0, u_n = 1: pi = -1/9
    got = oracle_uf_dot(cfg.plant, 1.0, np.ones(1), zero, np.ones(1), np.zeros(2), zero)
    assert got == pytest.approx([-0.9 * (1.0 - 1.0 / 9.0)])


def test_energy_examples():
    cfg = parametric_config()
    P = ClosedLoop(cfg).P
    p = cfg.params
    z2, z1 = np.zeros(2), np.zeros(1)
    Wz = np.zeros((6, 1))
    assert energy_V(P, z2, z1, Wz, np.zeros((1, 1)), p, [0.9]) == 0.0
    v = energy_V(P, z2, z1, Wz, -np.array([[0.9]]), p, [0.9])
    assert v == pytest.approx(p.beta1 / p.gamma1 * 0.81)
    assert energy_V(P, np.array([0.1, 0.0]), z1, Wz, np.zeros((1, 1)), p, [0.9]) > 0.0
    assert energy_V(P, z2, np.array([0.1]), Wz, np.zeros((1, 1)), p, [0.9]) == pytest.approx(0.01)


# --------------------------------------------------------------------------
# bound constants


def _bc_inputs():
    cfg = nonparametric_config()
    loop = ClosedLoop(cfg)
    return cfg, loop


def test_bound_constants_nonparametric_finite():
    cfg, _ = _bc_inputs()
    bc = bound_for_config(cfg)
    assert np.isfinite(bc.V_star) and bc.V_star >= 0.0
    assert min(bc.l1, bc.l2, bc.l3, bc.l4) > 0.0
    assert bc.d1 == pytest.approx(0.5)
    assert bc.kappa_min_slope == pytest.approx(0.1)
    assert bc.kappa_max_slope > 1.0
    assert bc.eps_bar > 0.0
    # scalar effectiveness: l2 = (2 - d2) alpha beta2 Lambda
    assert bc.l2 == pytest.approx((2 - 1) * 3.0 * 1.0 * 0.8)


def test_bound_constants_blow_up_near_d1_limit():
    cfg, loop = _bc_inputs()
    v = []
    for d1 in (0.5, 0.9, 0.99, 0.999):
        v.append(bound_for_config(cfg, d_choices=(d1, 1.0, 1.0, 1.0)))
    l1 = [b.l1 for b in v]
    vs = [b.V_star for b in v]
    assert all(a > b for a, b in zip(l1, l1[1:]))
    assert all(a < b for a, b in zip(vs, vs[1:]))
    assert l1[-1] <= 0.01 * l1[0]
    assert vs[-1] >= 10.0 * vs[0]


@pytest.mark.parametrize("d", [(0.0, 1, 1, 1), (1.0, 1, 1, 1), (0.5, 2.0, 1, 1), (0.5, 1, 0.0, 1), (0.5, 1, 1, -1)])
def test_bound_constants_invalid_d(d):
    cfg, _ = _bc_inputs()
    with pytest.raises(InvalidD):
        bound_for_config(cfg, d_choices=d)


def test_bound_constants_direct_formula():
    cfg, loop = _bc_inputs()
    W = np.ones((6, 1))
    bc = bound_constants(cfg.params, loop.P, loop.R, loop.B, [0.8], W, 0.5)
    p = cfg.params
    assert bc.l3 == pytest.approx(1.0 * p.beta3 * 0.8)
    assert bc.l4 == pytest.approx(1.0 * p.beta1 * p.gamma2 / p.gamma1)
    lmaxP = np.linalg.eigvalsh(loop.P)[-1]
    l5 = (p.beta1 * bc.kappa_max_slope / 0.5 * lmaxP**2 * 1.0 * 0.64 * 0.25
          + p.alpha * p.beta2 * 0.8 * 0.25 + p.beta3 * 6.0 * 0.8 + p.beta1 * p.gamma2 / p.gamma1 * 0.64)
    assert bc.l5 == pytest.approx(l5)


# --------------------------------------------------------------------------
# simulate


def test_fixed_gain_without_uncertainty_tracks_nominal():
    base = parametric_config(t_final=20.0)
    ideal = PlantSpec(base.plant.A, base.plant.B, [1.0], TrueUncertainty.zero(1), base.plant.x0)
    tr = simulate(base.replace(variant=Variant.FIXED_GAIN, plant=ideal))
    assert np.max(np.abs(tr.x - tr.x_n)) <= 1e-10


def test_trajectory_invariants(sim):
    tr = sim(parametric_config())
    assert len(tr.times) == len(tr.states) == len(tr.signals["u"]) == len(tr.signals["V"])
    assert np.all(np.diff(tr.times) > 0)
    assert tr.times[-1] == pytest.approx(100.0)
    assert np.all(np.isfinite(tr.states))


def test_leakage_beta2_ordering(sim):
    nominal = sim(nominal_config(nonparametric_config()))
    base = nonparametric_config().replace(variant=Variant.STANDARD_ADAPTIVE_LEAKAGE)
    ise1 = metrics(sim(base.with_params(beta2=1.0)), nominal)[0]
    ise2 = metrics(sim(base.with_params(beta2=2.0)), nominal)[0]
    assert ise2 > ise1


def test_divergence_reports_partial_trajectory():
    cfg = parametric_config(t_final=100.0).replace(variant=Variant.FIXED_GAIN).with_params(alpha=1.0)
    with pytest.raises(Diverged) as info:
        simulate(cfg)
    exc = info.value
    assert 0.0 < exc.t_last < 100.0
    tr = exc.trajectory
    assert tr is not None and np.all(np.isfinite(tr.states))
    assert tr.times[-1] <= exc.t_last


@pytest.mark.parametrize(
    "change, match",
    [
        (dict(dt=0.0), "dt"),
        (dict(dt=0.02), "0.01"),
        (dict(t_final=1e-4), "t_final"),
        (dict(record_stride=0), "record_stride"),
        (dict(basis=None), "basis"),
    ],
)
def test_validate_config_errors(change, match):
    with pytest.raises(ValidationError, match=match):
        validate_config(parametric_config().replace(**change))


def test_validate_config_rejects_unstable_gains():
    from symctl.control import Gains

    cfg = parametric_config().replace(gains=Gains([[0.0, 0.0]], [[0.16]]))
    with pytest.raises(ValidationError, match="Hurwitz"):
        validate_config(cfg)


def test_step_reference_is_constant():
    cfg = parametric_config(t_final=50.0).replace(reference=ReferenceSignal(kind="step"))
    tr = simulate(nominal_config(cfg))
    assert np.all(np.diff(tr.block("r_f")[:, 0]) >= 0.0)


def test_determinism():
    cfg = nonparametric_config(t_final=10.0)
    a, b = simulate(cfg), simulate(cfg)
    assert np.array_equal(a.states, b.states)


# --------------------------------------------------------------------------
# metrics


def _synthetic(times, x, u):
    lay = StateLayout(2, 1, 1, 0)
    states = np.zeros((len(times), lay.size))
    states[:, lay.slices["x"]] = x
    return Trajectory(np.asarray(times, float), states, {"u": np.asarray(u, float).reshape(-1, 1)}, lay)


def test_metrics_identical_runs():
    t = np.linspace(0, 5, 11)
    x = np.column_stack([np.sin(t), np.cos(t)])
    tr = _synthetic(t, x, np.ones_like(t))
    ise, sup, effort = metrics(tr, tr)
    assert (ise, sup) == (0.0, 0.0)
    assert effort == pytest.approx(5.0)


def test_metrics_constant_offset():
    t = np.linspace(0, 4, 9)
    a = _synthetic(t, np.zeros((9, 2)), np.zeros(9))
    b = _synthetic(t, np.tile([0.3, 0.4], (9, 1)), np.zeros(9))
    ise, sup, _ = metrics(b, a)
    assert ise == pytest.approx(0.25 * 4.0)
    assert sup == pytest.approx(0.5)


def test_metrics_grid_mismatch():
    a = _synthetic(np.linspace(0, 1, 5), np.zeros((5, 2)), np.zeros(5))
    b = _synthetic(np.linspace(0, 1, 6), np.zeros((6, 2)), np.zeros(6))
    with pytest.raises(GridMismatch):
        metrics(a, b)


def test_standard_adaptive_worse_than_symbiotic(sim):
    nominal = sim(nominal_config(parametric_config()))
    std = sim(parametric_config().replace(variant=Variant.STANDARD_ADAPTIVE))
    sym = sim(parametric_config())
    assert metrics(std, nominal)[0] > metrics(sym, nominal)[0]


# --------------------------------------------------------------------------
# per-segment decay (the asymptotic limit restated for a periodic reference)


@pytest.mark.parametrize("alpha", [1.0, 3.0])
def test_segment_decay(sim, alpha):
    cfg = parametric_config().with_params(alpha=alpha)
    tr = sim(cfg)
    P = ClosedLoop(cfg).P
    e = tr.signals["e"]
    z = np.einsum("ki,ij,kj->k", e, P, e)
    g = np.array([kappa_eval(cfg.params.kappa, zi)[1] for zi in z]) * np.linalg.norm(e, axis=1)
    uf = np.abs(tr.signals["u_f"][:, 0])
    half = cfg.reference.period / 2
    for k in range(int(round(cfg.t_final / half))):
        a = np.searchsorted(tr.times, k * half + 1e-9)
        b = np.searchsorted(tr.times, (k + 1) * half - 1e-9)
        seg = slice(a, b + 1)
        assert g[b] <= 0.25 * g[seg].max()
        assert uf[b] <= 0.25 * uf[seg].max()
