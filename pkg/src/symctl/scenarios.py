"""
Built-in scenario presets for the two benchmark studies.

Both use the double integrator ``A = [[0, 1], [0, 0]]``, ``B = [0; 1]`` with
nominal gains ``K1 = [0.16, 0.57]``, ``K2 = [0.16]``, ``R = I`` and zero
initial conditions. The reference is a filtered square wave; its amplitude,
period and lag are not fixed by the benchmark and default to 1, 40 s and 1 s.
"""

from dataclasses import dataclass, field

import numpy as np

from .composite import IdentityFn, build_composite
from .control import Gains, SymbioticParams, Variant
from .plant import PlantSpec, PolynomialFeatures, ReferenceSignal, TrueUncertainty, benchmark_rbf_basis, parse_polynomial
from .sim import SimConfig

A = [[0.0, 1.0], [0.0, 0.0]]
B = [[0.0], [1.0]]
K1 = [[0.16, 0.57]]
K2 = [[0.16]]

DELTA_PARAMETRIC = "0.2*x1 + 0.2*x2 + 0.8*x1*x2 + 0.1*x1^3 + 0.1*x2^2"
DELTA_NONPARAMETRIC = "0.4*x1 + 0.4*x2 + 1.6*x1*x2 + 0.2*x1^3 + 0.2*x2^2"
LAMBDA_PARAMETRIC = 0.9
LAMBDA_NONPARAMETRIC = 0.8

# kappa used in both studies
KAPPA_A, KAPPA_B, KAPPA_RHO = 1.0, 2.0, 0.1


@dataclass
class Scenario:
    name: str
    config: SimConfig
    comparisons: list = field(default_factory=list)

    def runs(self):
        """``[(label, SimConfig)]`` with the nominal run first."""
        from .sim import nominal_config

        out = [("nominal", nominal_config(self.config))]
        for label, overrides in self.comparisons:
            out.append((label, apply_overrides(self.config, overrides)))
        return out


def apply_overrides(cfg, overrides):
    """`overrides` maps ``variant`` and ``params.<name>`` to new values."""
    params = {}
    top = {}
    for key, value in overrides.items():
        if key.startswith("params."):
            params[key[len("params."):]] = value
        else:
            top[key] = value
    if params:
        cfg = cfg.with_params(**params)
    if top:
        cfg = cfg.replace(**top)
    return cfg


def benchmark_kappa():
    return build_composite(KAPPA_A, KAPPA_B, KAPPA_RHO)


def _plant(delta, lam):
    return PlantSpec(A, B, [lam], TrueUncertainty((parse_polynomial(delta, 2),)), [0.0, 0.0])


def parametric_basis():
    return PolynomialFeatures(((1, 0), (0, 1), (1, 1), (3, 0), (0, 2)))


def parametric_config(**sim):
    """Symbiotic parametric design, alpha = 3 (the final tuning of the study)."""
    params = SymbioticParams(alpha=3.0, beta1=1.0, beta2=1.0, gamma1=1.0, R=np.eye(2), kappa=benchmark_kappa())
    return SimConfig(
        variant=Variant.SYMBIOTIC_PARAMETRIC,
        plant=_plant(DELTA_PARAMETRIC, LAMBDA_PARAMETRIC),
        gains=Gains(K1, K2),
        params=params,
        basis=parametric_basis(),
        reference=ReferenceSignal(),
        **sim,
    )


def nonparametric_config(**sim):
    """Symbiotic design with leakage and an RBF basis."""
    params = SymbioticParams(
        alpha=3.0, beta1=1.0, beta2=1.0, beta3=2.0, gamma1=1.0, gamma2=2.0, R=np.eye(2), kappa=benchmark_kappa()
    )
    return SimConfig(
        variant=Variant.SYMBIOTIC_NONPARAMETRIC,
        plant=_plant(DELTA_NONPARAMETRIC, LAMBDA_NONPARAMETRIC),
        gains=Gains(K1, K2),
        params=params,
        basis=benchmark_rbf_basis(),
        reference=ReferenceSignal(),
        **sim,
    )


def parametric_fig2(**sim):
    cfg = parametric_config(**sim)
    comparisons = [
        ("standard_adaptive_beta1", {"variant": Variant.STANDARD_ADAPTIVE, "params.beta1": 1.0}),
        ("symbiotic_identity_kappa_alpha1", {"params.alpha": 1.0, "params.kappa": IdentityFn()}),
        ("symbiotic_alpha1", {"params.alpha": 1.0}),
        ("symbiotic_alpha3", {"params.alpha": 3.0}),
    ]
    return Scenario("parametric-fig2", cfg, comparisons)


def nonparametric_fig3(**sim):
    cfg = nonparametric_config(**sim)
    comparisons = [
        ("leakage_beta2_1", {"variant": Variant.STANDARD_ADAPTIVE_LEAKAGE, "params.beta1": 1.0, "params.beta2": 1.0}),
        ("leakage_beta2_2", {"variant": Variant.STANDARD_ADAPTIVE_LEAKAGE, "params.beta1": 1.0, "params.beta2": 2.0}),
        ("symbiotic_alpha3", {}),
        ("fixed_gain_alpha9", {"variant": Variant.FIXED_GAIN, "params.alpha": 9.0}),
    ]
    return Scenario("nonparametric-fig3", cfg, comparisons)


PRESETS = {
    "parametric-fig2": parametric_fig2,
    "nonparametric-fig3": nonparametric_fig3,
}


def preset(name, **sim):
    try:
        return PRESETS[name](**sim)
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
