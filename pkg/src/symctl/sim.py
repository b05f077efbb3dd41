"""
Closed-loop assembly, fixed-step RK4 integration and diagnostics.

The integrated state stacks the plant state, the nominal model, the reference
filter, the two integrals behind the implementable fixed-gain signal and the
adaptive estimates::

    [x | x_n | r_f | q | q_g | vec(W_hat) | vec(Lambda_hat) | u_f oracle?]

The last block only exists when ``SimConfig.track_oracle`` is set; it
integrates the equivalent (non-implementable) fixed-gain dynamics driven by
the true Lambda and total uncertainty so tests can compare both forms on the
same trajectory. The controller never reads it.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import control as ctl
from .composite import CompositeFn, kappa_eval
from .control import Gains, SymbioticParams, Variant
from .errors import Diverged, GridMismatch, InvalidD, NonFiniteState, ValidationError
from .linalg import left_pseudoinverse, solve_lyapunov, sym_eig_extremes
from .plant import (
    PlantSpec,
    PolynomialFeatures,
    RbfWithBias,
    ReferenceSignal,
    eval_basis,
    eval_delta,
    ideal_weight,
    ideal_weight_and_eps,
    reference_square,
    total_uncertainty,
)

DIVERGENCE_NORM = 1e6


@dataclass(frozen=True, eq=False)
class SimConfig:
    variant: Variant
    plant: PlantSpec
    gains: Gains
    params: SymbioticParams = field(default_factory=SymbioticParams)
    basis: object = None
    reference: ReferenceSignal = field(default_factory=ReferenceSignal)
    dt: float = 1e-3
    t_final: float = 100.0
    record_stride: int = 10
    track_oracle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_params(self, **changes):
        return self.replace(params=dataclasses.replace(self.params, **changes))


def validate_config(cfg):
    """Raise :class:`ValidationError` naming the first violated invariant."""
    if not cfg.dt > 0.0:
        raise ValidationError("sim.dt must be positive")
    if not cfg.t_final >= cfg.dt:
        raise ValidationError("sim.t_final must be at least sim.dt")
    if int(cfg.record_stride) != cfg.record_stride or cfg.record_stride < 1:
        raise ValidationError("sim.record_stride must be a positive integer")
    p = cfg.params
    if cfg.variant.uses_fixed_gain and p.alpha is not None and p.alpha >= 1.0 and cfg.dt > 1e-2:
        raise ValidationError("sim.dt must be <= 0.01 when alpha >= 1 (stiff boundary layer)")
    plant = cfg.plant
    cfg.gains.validate_for(plant.A, plant.B)
    if cfg.gains.K2.shape[0] != plant.m:
        raise ValidationError(f"K2 must have {plant.m} rows")
    ctl.validate_params(cfg.variant, p, plant.n)
    if cfg.variant.uses_adaptation and cfg.basis is None:
        raise ValidationError(f"{cfg.variant.value} requires a regressor basis")


# --------------------------------------------------------------------------
# state layout


@dataclass
class SimState:
    x: np.ndarray
    x_n: np.ndarray
    r_f: np.ndarray
    q: np.ndarray
    qg: np.ndarray
    W_hat: np.ndarray
    Lambda_hat: np.ndarray
    uf_oracle: np.ndarray = None


class StateLayout:
    """Maps :class:`SimState` blocks to slices of one flat vector."""

    def __init__(self, n, m, p, s, oracle=False):
        self.n, self.m, self.p, self.s = n, m, p, s
        self.oracle = oracle
        sizes = [("x", n), ("x_n", n), ("r_f", p), ("q", n), ("qg", m),
                 ("W_hat", (s + m) * m), ("Lambda_hat", m * m)]
        if oracle:
            sizes.append(("uf_oracle", m))
        self.slices = {}
        start = 0
        for name, size in sizes:
            self.slices[name] = slice(start, start + size)
            start += size
        self.size = start

    def flatten(self, st):
        y = np.zeros(self.size)
        for name, sl in self.slices.items():
            y[sl] = np.asarray(getattr(st, name), dtype=float).reshape(-1)
        return y

    def unflatten(self, y):
        sl = self.slices
        return SimState(
            x=y[sl["x"]].copy(),
            x_n=y[sl["x_n"]].copy(),
            r_f=y[sl["r_f"]].copy(),
            q=y[sl["q"]].copy(),
            qg=y[sl["qg"]].copy(),
            W_hat=y[sl["W_hat"]].reshape(self.s + self.m, self.m).copy(),
            Lambda_hat=y[sl["Lambda_hat"]].reshape(self.m, self.m).copy(),
            uf_oracle=y[sl["uf_oracle"]].copy() if self.oracle else None,
        )

    def initial(self, x0):
        st = SimState(
            x=np.asarray(x0, dtype=float),
            x_n=np.asarray(x0, dtype=float),
            r_f=np.zeros(self.p),
            q=np.zeros(self.n),
            qg=np.zeros(self.m),
            W_hat=np.zeros((self.s + self.m, self.m)),
            Lambda_hat=np.zeros((self.m, self.m)),
            uf_oracle=np.zeros(self.m) if self.oracle else None,
        )
        return self.flatten(st)


# --------------------------------------------------------------------------
# closed loop


class ClosedLoop:
    """Precomputed matrices and the right-hand side for one configuration."""

    def __init__(self, cfg):
        self.cfg = cfg
        plant = cfg.plant
        self.variant = cfg.variant
        self.p_ = cfg.params
        self.A, self.B = plant.A, plant.B
        self.n, self.m = plant.n, plant.m
        self.p = cfg.gains.K2.shape[1]
        self.K1, self.K2 = cfg.gains.K1, cfg.gains.K2
        self.A_n, self.B_n = cfg.gains.closed_loop(plant.A, plant.B)
        self.R = self.p_.R_or_identity(self.n)
        self.P = solve_lyapunov(self.A_n, self.R)
        self.PB = self.P @ self.B
        self.B_i = left_pseudoinverse(self.B)
        self.lam = plant.lambda_diag
        self.BLam = self.B * self.lam
        self.x0 = plant.x0
        self.s = cfg.basis.s if cfg.basis is not None else 0
        self.layout = StateLayout(self.n, self.m, self.p, self.s, cfg.track_oracle)
        self.tau = cfg.reference.filter_time_constant

    def raw_reference(self, t):
        return np.full(self.p, reference_square(self.cfg.reference, t))

    def evaluate(self, y, r_sq):
        """Return ``(dy, signals)`` at flat state `y` with raw reference `r_sq`."""
        sl = self.layout.slices
        m, s = self.m, self.s
        v = self.variant
        p = self.p_
        x = y[sl["x"]]
        xn = y[sl["x_n"]]
        rf = y[sl["r_f"]]
        e = x - xn

        u_n = -self.K1 @ x + self.K2 @ rf
        if v.uses_adaptation:
            W_hat = y[sl["W_hat"]].reshape(s + m, m)
            sigma = np.concatenate([eval_basis(self.cfg.basis, x), u_n])
            u_a = -W_hat.T @ sigma
        else:
            u_a = np.zeros(m)
        if v.uses_fixed_gain:
            q = y[sl["q"]]
            qg = y[sl["qg"]]
            u_f = p.alpha * (self.B_i @ (q - (x - self.x0))) + qg
        else:
            u_f = np.zeros(m)

        Pe = self.P @ e
        u_g = np.zeros(m)
        kp = 1.0
        if v.is_symbiotic:
            kp = kappa_eval(p.kappa, max(float(e @ Pe), 0.0))[1]
            Lambda_hat = y[sl["Lambda_hat"]].reshape(m, m)
            u_g = ctl.gating_signal(p, self.P, e, Lambda_hat, self.B, kp=kp)

        u = u_n + u_f + u_a
        delta = eval_delta(self.cfg.plant.delta, x)
        pi = delta + (1.0 - 1.0 / self.lam) * u_n

        dy = np.zeros_like(y)
        dy[sl["x"]] = self.A @ x + self.BLam @ (u + delta)
        dy[sl["x_n"]] = self.A_n @ xn + self.B_n @ rf
        dy[sl["r_f"]] = (r_sq - rf) / self.tau
        if v.uses_fixed_gain:
            dy[sl["q"]] = self.A_n @ x + self.B_n @ rf
            dy[sl["qg"]] = u_g

        if v is Variant.STANDARD_ADAPTIVE:
            dW = ctl.w_hat_dot_standard(p.beta1, sigma, e, self.P, self.B)
        elif v is Variant.STANDARD_ADAPTIVE_LEAKAGE:
            dW = ctl.w_hat_dot_standard_leakage(p.beta1, p.beta2, sigma, e, self.P, self.B, W_hat)
        elif v.is_symbiotic:
            dW = ctl.w_hat_dot_symbiotic_nonparametric(p, kp, sigma, e, self.P, self.B, u_f, W_hat)
            dL = ctl.lambda_hat_dot_leakage(p.gamma1, p.gamma2, kp, e, self.P, self.B, u_f, Lambda_hat)
            dy[sl["Lambda_hat"]] = dL.reshape(-1)
        if v.uses_adaptation:
            dy[sl["W_hat"]] = dW.reshape(-1)

        if self.layout.oracle:
            uf_o = y[sl["uf_oracle"]]
            alpha = p.alpha if v.uses_fixed_gain else 0.0
            dy[sl["uf_oracle"]] = _oracle_uf_dot(self.lam, alpha, uf_o, u_a, pi, u_g)

        signals = {"u": u, "u_n": u_n, "u_f": u_f, "u_a": u_a, "u_g": u_g, "e": e, "pi": pi}
        return dy, signals

    def derivative(self, y, r_sq):
        return self.evaluate(y, r_sq)[0]

    def kernel_args(self):
        """Flat argument tuple for :func:`symctl._kernel.integrate`."""
        from ._kernel import VARIANT_CODES

        cfg, p, lay = self.cfg, self.p_, self.layout
        names = ["x", "x_n", "r_f", "q", "qg", "W_hat", "Lambda_hat", "uf_oracle"]
        off = np.array([lay.slices[k].start if k in lay.slices else -1 for k in names], dtype=np.int64)
        kap = p.kappa
        if isinstance(kap, CompositeFn):
            kargs = (1, kap.a, kap.b, kap.rho, np.array(kap.psi))
        else:
            kargs = (0, 0.0, 0.0, 1.0, np.zeros(6))
        basis = cfg.basis
        if isinstance(basis, RbfWithBias):
            bargs = (1, np.zeros((0, self.n), dtype=np.int64), basis.coords, basis.values, float(basis.width))
        elif basis is not None:
            bargs = (0, basis.exps, np.zeros(0, dtype=np.int64), np.zeros(0), 1.0)
        else:
            bargs = (0, np.zeros((0, self.n), dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), 1.0)
        delta = cfg.plant.delta
        dexps = delta.exps if delta.exps.size else np.zeros((0, self.n), dtype=np.int64)
        ref = cfg.reference

        def num(v):
            return 0.0 if v is None else float(v)

        c = np.ascontiguousarray
        return (
            1 if ref.kind == "step" else 0, float(ref.amplitude), float(ref.period),
            off, self.n, self.m, self.p, self.s, VARIANT_CODES[self.variant.value], lay.oracle,
            c(self.A), c(self.BLam), c(self.K1), c(self.K2), c(self.A_n), c(self.B_n), c(self.P),
            c(self.B), c(self.B_i), c(self.x0), c(self.lam), float(self.tau),
            num(p.alpha), num(p.beta1), num(p.beta2), num(p.beta3), num(p.gamma1), num(p.gamma2),
            *kargs, delta.coefs, c(dexps), delta.chans, *bargs,
        )


def rhs(cfg, t, s):
    """Time derivative of :class:`SimState` `s` at time `t`, as a SimState."""
    loop = ClosedLoop(cfg)
    y = loop.layout.flatten(s)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(f"non-finite state at t={t}")
    dy = loop.derivative(y, loop.raw_reference(t))
    return loop.layout.unflatten(dy)


def oracle_uf_dot(truth, alpha, u_f, u_a, u_n, x, u_g):
    """
    Equivalent fixed-gain dynamics ``-alpha Lambda (u_f + u_a + pi) + u_g``.

    Needs the true effectiveness and total uncertainty of the plant `truth`,
    so it is only usable as a test oracle.
    """
    pi = total_uncertainty(truth, x, u_n)
    return _oracle_uf_dot(truth.lambda_diag, alpha, u_f, u_a, pi, u_g)


def _oracle_uf_dot(lam, alpha, u_f, u_a, pi, u_g):
    lam = np.asarray(lam, dtype=float)
    return -alpha * lam * (np.asarray(u_f) + np.asarray(u_a) + np.asarray(pi)) + np.asarray(u_g)


# --------------------------------------------------------------------------
# integration


def rk4_step(f, t, s, dt):
    """One classical Runge-Kutta step of ``s' = f(t, s)``."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    k1 = f(t, s)
    k2 = f(t + 0.5 * dt, s + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, s + 0.5 * dt * k2)
    k4 = f(t + dt, s + dt * k3)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state after step from t={t}")
    return out


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    signals: dict
    layout: StateLayout
    variant: Variant = None

    def __len__(self):
        return len(self.times)

    def state(self, k):
        return self.layout.unflatten(self.states[k])

    def block(self, name):
        sl = self.layout.slices[name]
        return self.states[:, sl]

    @property
    def x(self):
        return self.block("x")

    @property
    def x_n(self):
        return self.block("x_n")


def simulate(cfg, validate=True, compiled=True):
    """
    Integrate the closed loop of `cfg` with fixed-step RK4.

    The raw square-wave reference is held constant over each step at its
    mid-step value, so reference edges that fall on the step grid are
    resolved exactly. Snapshots are stored every ``record_stride`` steps and
    at the final time; control signals are reconstructed from them.

    With ``compiled=False`` the loop runs on the pure-numpy right-hand side
    (slow, but independent of the compiled kernel).

    Raises
    ------
    Diverged
        When any state norm exceeds 1e6 or becomes non-finite.
    """
    if validate:
        validate_config(cfg)
    loop = ClosedLoop(cfg)
    dt = float(cfg.dt)
    nsteps = int(round(cfg.t_final / dt))
    stride = int(cfg.record_stride)
    y0 = loop.layout.initial(cfg.plant.x0)

    if compiled:
        from . import _kernel

        steps, states, failed = _kernel.integrate(y0, nsteps, dt, stride, DIVERGENCE_NORM, *loop.kernel_args())
    else:
        steps, states, failed = _integrate_numpy(loop, y0, nsteps, dt, stride)

    traj = _pack(loop, steps * dt, states, compiled)
    if failed >= 0:
        raise Diverged(f"{cfg.variant.value} diverged after t={failed * dt:.6g}", failed * dt, traj)
    if cfg.variant.is_symbiotic:
        traj.signals["V"] = energy_series(cfg, traj)
    else:
        traj.signals["V"] = np.full(len(traj), np.nan)
    return traj


def _integrate_numpy(loop, y, nsteps, dt, stride):
    steps, states = [0], [y.copy()]
    for k in range(nsteps):
        t = k * dt
        r_sq = loop.raw_reference(t + 0.5 * dt)
        try:
            y = rk4_step(lambda _t, yy: loop.derivative(yy, r_sq), t, y, dt)
        except NonFiniteState:
            return np.array(steps), np.array(states), k
        if np.linalg.norm(y) > DIVERGENCE_NORM:
            return np.array(steps), np.array(states), k
        if (k + 1) % stride == 0 or k + 1 == nsteps:
            steps.append(k + 1)
            states.append(y.copy())
    return np.array(steps), np.array(states), -1


def _pack(loop, times, states, compiled=True):
    dt = loop.cfg.dt
    # the reference held over the step that ends at t (or starts, at t=0)
    r_sq = np.array([reference_square(loop.cfg.reference, max(t - 0.5 * dt, 0.5 * dt)) for t in times])
    if compiled:
        from . import _kernel

        n, m = loop.n, loop.m
        flat = _kernel.signals(np.ascontiguousarray(states), r_sq, *loop.kernel_args()[3:])
        cols = {"u": (0, m), "u_n": (m, 2 * m), "u_f": (2 * m, 3 * m), "u_a": (3 * m, 4 * m),
                "u_g": (4 * m, 5 * m), "e": (5 * m, 5 * m + n), "pi": (5 * m + n, 6 * m + n)}
        signals = {k: flat[:, a:b].copy() for k, (a, b) in cols.items()}
    else:
        sig = {}
        for r, y in zip(r_sq, states):
            _, values = loop.evaluate(y, np.full(loop.p, r))
            for k, v in values.items():
                sig.setdefault(k, []).append(v)
        signals = {k: np.array(v) for k, v in sig.items()}
    return Trajectory(np.asarray(times, dtype=float), np.asarray(states), signals, loop.layout, loop.variant)


# --------------------------------------------------------------------------
# diagnostics


def true_weight(cfg, grid=None):
    """
    The ideal ``W = [W_delta; I - Lambda^{-1}]`` used by the energy function.

    Exact for polynomial bases; a grid least-squares fit otherwise. Returns
    ``(W, eps_bar)``.
    """
    plant, basis = cfg.plant, cfg.basis
    if isinstance(basis, PolynomialFeatures):
        return ideal_weight(plant, basis), 0.0
    W_delta, eps_bar = ideal_weight_and_eps(plant, basis, grid)
    return np.vstack([W_delta, np.diag(1.0 - 1.0 / plant.lambda_diag)]), eps_bar


def energy_V(P, e, u_f, W_tilde, Lambda_tilde, params, lambda_true):
    """
    ``beta1 kappa(e^T P e) + beta2 |u_f|^2 + tr(W~ L^1/2)^T (W~ L^1/2)
    + (beta1 / gamma1) tr(L~^T L~)``.
    """
    e = np.asarray(e, dtype=float)
    u_f = np.asarray(u_f, dtype=float)
    Wt = np.asarray(W_tilde, dtype=float)
    Lt = np.asarray(Lambda_tilde, dtype=float)
    z = max(float(e @ P @ e), 0.0)
    WL = Wt * np.sqrt(np.asarray(lambda_true, dtype=float))
    return (
        params.beta1 * kappa_eval(params.kappa, z)[0]
        + params.beta2 * float(u_f @ u_f)
        + float(np.sum(WL * WL))
        + params.beta1 / params.gamma1 * float(np.sum(Lt * Lt))
    )


def energy_series(cfg, traj, W=None):
    """Energy function along recorded snapshots (post-hoc, uses the truth)."""
    if W is None:
        W, _ = true_weight(cfg)
    P = ClosedLoop(cfg).P
    p = cfg.params
    lam = cfg.plant.lambda_diag
    e = traj.signals["e"]
    u_f = traj.signals["u_f"]
    k = len(traj)
    lay = traj.layout
    Wt = traj.block("W_hat").reshape(k, lay.s + lay.m, lay.m) - W
    Lt = traj.block("Lambda_hat").reshape(k, lay.m, lay.m) - cfg.plant.Lambda
    z = np.maximum(np.einsum("ki,ij,kj->k", e, P, e), 0.0)
    kap = np.array([kappa_eval(p.kappa, zi)[0] for zi in z])
    return (
        p.beta1 * kap
        + p.beta2 * np.sum(u_f * u_f, axis=1)
        + np.sum(Wt * Wt * lam, axis=(1, 2))
        + p.beta1 / p.gamma1 * np.sum(Lt * Lt, axis=(1, 2))
    )


@dataclass(frozen=True)
class BoundConstants:
    d1: float
    d2: float
    d3: float
    d4: float
    l1: float
    l2: float
    l3: float
    l4: float
    l5: float
    V_star: float
    kappa_min_slope: float
    kappa_max_slope: float
    eps_bar: float


def bound_constants(params, P, R, B, lambda_true, W_true, eps_bar, kappa=None, d_choices=None):
    """
    Ultimate-bound constants for the leakage-equipped symbiotic design.

    `d_choices` is ``(d1, d2, d3, d4)`` with ``d1`` in ``(0, lambda_min(R))``
    and the others in ``(0, 2)``; defaults to the interval midpoints. The
    slope extremes of kappa come from the composite itself (exact, not
    assumed).
    """
    kappa = params.kappa if kappa is None else kappa
    kmin = kappa.min_slope
    kmax = kappa.max_slope
    if not kmin > 0.0:
        raise ValidationError("the bound needs kappa with a strictly positive minimum slope")
    lam = np.asarray(lambda_true, dtype=float)
    R_min, _ = sym_eig_extremes(R)
    _, P_max = sym_eig_extremes(P)
    if d_choices is None:
        d_choices = (0.5 * R_min, 1.0, 1.0, 1.0)
    d1, d2, d3, d4 = (float(d) for d in d_choices)
    if not 0.0 < d1 < R_min:
        raise InvalidD(f"d1 must lie in (0, {R_min}), got {d1}")
    for name, d in (("d2", d2), ("d3", d3), ("d4", d4)):
        if not 0.0 < d < 2.0:
            raise InvalidD(f"{name} must lie in (0, 2), got {d}")

    a, b1, b2, b3 = params.alpha, params.beta1, params.beta2, params.beta3
    g1, g2 = params.gamma1, params.gamma2
    lam_min, lam_max = float(lam.min()), float(lam.max())
    norm_P = P_max
    norm_B = float(np.sqrt(sym_eig_extremes(B.T @ B)[1]))
    norm_L = lam_max
    W_F2 = float(np.sum(np.asarray(W_true) ** 2))

    l1 = b1 * (R_min - d1) * kmin
    l2 = (2.0 - d2) * a * b2 * lam_min
    l3 = (2.0 - d3) * b3 * lam_min
    l4 = (2.0 - d4) * b1 / g1 * g2
    l5 = (
        b1 * kmax / d1 * norm_P**2 * norm_B**2 * norm_L**2 * eps_bar**2
        + a * b2 / d2 * norm_L * eps_bar**2
        + b3 / d3 * W_F2 * lam_max
        + b1 / g1 * g2 / d4 * lam_max**2
    )
    V_star = b1 * P_max * l5 / l1 + b2 * l5 / l2 + lam_max * l5 / l3 + b1 / g1 * l5 / l4
    return BoundConstants(d1, d2, d3, d4, l1, l2, l3, l4, l5, V_star, kmin, kmax, eps_bar)


def bound_for_config(cfg, d_choices=None, grid=None):
    """:func:`bound_constants` for a nonparametric symbiotic configuration."""
    W, eps_bar = true_weight(cfg, grid)
    loop = ClosedLoop(cfg)
    return bound_constants(cfg.params, loop.P, loop.R, loop.B, cfg.plant.lambda_diag,
                           W, eps_bar, d_choices=d_choices)


def _trapz(y, t):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def metrics(tr, nominal):
    """
    Compare `tr` against the `nominal` run on the same time grid.

    Returns
    -------
    ise : float
        Trapezoidal integral of ``|x - x_nom|^2``.
    sup_err : float
        ``max_t |x - x_nom|``.
    effort : float
        Trapezoidal integral of ``|u|^2`` for `tr`.
    """
    if len(tr.times) != len(nominal.times) or not np.allclose(tr.times, nominal.times, rtol=0, atol=1e-9):
        raise GridMismatch("trajectories are recorded on different time grids")
    err = np.linalg.norm(tr.x - nominal.x, axis=1)
    u = np.atleast_2d(tr.signals["u"])
    effort_density = np.sum(u.reshape(len(tr.times), -1) ** 2, axis=1)
    return _trapz(err**2, tr.times), float(np.max(err)), _trapz(effort_density, tr.times)


def nominal_config(cfg):
    """The uncertainty-free, unmodified closed loop matching `cfg`."""
    plant = cfg.plant
    ideal = PlantSpec(plant.A, plant.B, np.ones(plant.m), type(plant.delta).zero(plant.m), plant.x0)
    return cfg.replace(variant=Variant.NOMINAL, plant=ideal, track_oracle=False)
