"""
Fixed-gain control combined with adaptive learning for uncertain linear
systems ``x' = A x + B Lambda (u + delta(x))``.

Typical use::

    from symctl import preset, simulate, metrics
    sc = preset("parametric-fig2")
    runs = {label: simulate(cfg) for label, cfg in sc.runs()}
"""

import sys as _sys

from .cli import RunRecord, SweepRow, emit_plot_script, run_scenario, sweep_alpha, write_csv
from .composite import CompositeFn, IdentityFn, build_composite, kappa_eval, kappa_prime, sample
from .config import config_hash, dump_config, load_config, load_scenario
from .control import Gains, SymbioticParams, Variant, validate_params
from .errors import (
    ConfigError,
    Diverged,
    GridMismatch,
    InvalidD,
    LinAlgError,
    NotHurwitz,
    ParseError,
    SymctlError,
    ValidationError,
)
from .linalg import is_hurwitz, left_pseudoinverse, solve_lyapunov, sym_eigvals
from .plant import (
    PlantSpec,
    PolynomialFeatures,
    RbfWithBias,
    ReferenceSignal,
    TrueUncertainty,
    parse_polynomial,
)
from .scenarios import PRESETS, Scenario, nonparametric_config, parametric_config, preset
from .sim import (
    BoundConstants,
    SimConfig,
    SimState,
    Trajectory,
    bound_constants,
    bound_for_config,
    energy_V,
    metrics,
    nominal_config,
    rhs,
    rk4_step,
    simulate,
    true_weight,
)

__version__ = "0.1.0"

__all__ = [name for name, obj in list(globals().items()) if not name.startswith("_") and not isinstance(obj, type(_sys))]
