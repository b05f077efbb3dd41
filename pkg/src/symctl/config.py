"""
Flat ``key = value`` scenario files.

One assignment per line, ``#`` starts a comment. Values are read as JSON when
possible (numbers, lists, ``true``/``false``) and as bare strings otherwise,
so polynomials and names need no quoting::

    variant = symbiotic_nonparametric
    sim.dt = 1e-3
    plant.lambda = [0.8]
    plant.delta.1 = 0.4*x1 + 0.4*x2 + 1.6*x1*x2 + 0.2*x1^3 + 0.2*x2^2
    params.alpha = 3
    compare.fixed_gain_alpha9.variant = fixed_gain
    compare.fixed_gain_alpha9.params.alpha = 9

Keys
----
``preset``
    Start from a built-in scenario and override the keys that follow.
``name``
    Scenario name used in output file names.
``variant``
    One of the :class:`~symctl.control.Variant` values.
``sim.dt``, ``sim.t_final``, ``sim.record_stride``, ``sim.track_oracle``
``plant.A``, ``plant.B``, ``plant.lambda``, ``plant.x0``
    Nested lists; ``plant.lambda`` is the diagonal of the effectiveness.
``plant.delta.<j>``
    Polynomial for control channel ``j`` (1-based) in ``x1 .. xn``.
``gains.K1``, ``gains.K2``
``params.alpha``, ``params.beta1``, ``params.beta2``, ``params.beta3``,
``params.gamma1``, ``params.gamma2``, ``params.R``
``kappa``
    ``composite`` (default) or ``identity``.
``kappa.a``, ``kappa.b``, ``kappa.rho``
``basis.kind``
    ``polynomial`` or ``rbf``.
``basis.monomials``
    For polynomial bases, a sum of monomials such as ``x1 + x2 + x1*x2``.
``basis.centers``, ``basis.width``
    For RBF bases; every center is used on every coordinate.
``reference.kind``, ``reference.amplitude``, ``reference.period``,
``reference.tau``
``compare.<label>.<key>``
    Extra run of the scenario. Only ``variant``, ``params.*``, ``kappa*``
    and ``basis.*`` may differ from the base run.
"""

import hashlib
import json
import os

import numpy as np

from .composite import CompositeFn, IdentityFn, build_composite
from .control import Gains, SymbioticParams, Variant
from .errors import CompositeError, ConfigError, LinAlgError, ParseError, ValidationError
from .plant import (
    PlantSpec,
    PolynomialFeatures,
    RbfWithBias,
    ReferenceSignal,
    TrueUncertainty,
    format_monomial,
    format_polynomial,
    parse_polynomial,
)
from .scenarios import PRESETS, Scenario, preset
from .sim import SimConfig, validate_config

PARAM_KEYS = ("alpha", "beta1", "beta2", "beta3", "gamma1", "gamma2", "R")
SIM_KEYS = ("dt", "t_final", "record_stride", "track_oracle")
REF_KEYS = {"kind": "kind", "amplitude": "amplitude", "period": "period", "tau": "filter_time_constant"}
COMPARE_PREFIXES = ("variant", "params.", "kappa", "basis.")


def parse_text(text, path=None):
    """Parse config text into an ordered ``{key: value}`` dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ParseError(f"bad key {key!r}", lineno, path)
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno, path)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", lineno, path)
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            if value[0] in "[{\"":
                raise ParseError(f"malformed value for {key!r}: {value}", lineno, path) from None
            out[key] = value
    return out


# --------------------------------------------------------------------------
# config -> keys


def _fmt(v):
    return json.dumps(np.asarray(v, dtype=float).tolist())


def config_items(cfg):
    """Canonical ``{key: text}`` description of `cfg` (no comparisons)."""
    plant, p = cfg.plant, cfg.params
    items = {
        "variant": cfg.variant.value,
        "sim.dt": repr(float(cfg.dt)),
        "sim.t_final": repr(float(cfg.t_final)),
        "sim.record_stride": str(int(cfg.record_stride)),
        "sim.track_oracle": "true" if cfg.track_oracle else "false",
        "plant.A": _fmt(plant.A),
        "plant.B": _fmt(plant.B),
        "plant.lambda": _fmt(plant.lambda_diag),
        "plant.x0": _fmt(plant.x0),
        "gains.K1": _fmt(cfg.gains.K1),
        "gains.K2": _fmt(cfg.gains.K2),
        "reference.kind": cfg.reference.kind,
        "reference.amplitude": repr(float(cfg.reference.amplitude)),
        "reference.period": repr(float(cfg.reference.period)),
        "reference.tau": repr(float(cfg.reference.filter_time_constant)),
    }
    for j, terms in enumerate(plant.delta.channels, start=1):
        items[f"plant.delta.{j}"] = format_polynomial(terms)
    for name in PARAM_KEYS:
        v = getattr(p, name)
        if v is not None:
            items[f"params.{name}"] = _fmt(v) if name == "R" else repr(float(v))
    if isinstance(p.kappa, IdentityFn):
        items["kappa"] = "identity"
    elif isinstance(p.kappa, CompositeFn):
        items["kappa"] = "composite"
        items["kappa.a"] = repr(float(p.kappa.a))
        items["kappa.b"] = repr(float(p.kappa.b))
        items["kappa.rho"] = repr(float(p.kappa.rho))
    basis = cfg.basis
    if isinstance(basis, PolynomialFeatures):
        items["basis.kind"] = "polynomial"
        items["basis.monomials"] = " + ".join(format_monomial(e) for e in basis.monomials)
    elif isinstance(basis, RbfWithBias):
        items["basis.kind"] = "rbf"
        items["basis.centers"] = json.dumps([[int(i), float(c)] for i, c in basis.centers])
        items["basis.width"] = repr(float(basis.width))
    return items


def dump_config(cfg):
    """Canonical text form; loading it back gives an equivalent config."""
    items = config_items(cfg)
    return "".join(f"{k} = {items[k]}\n" for k in sorted(items))


def config_hash(cfg):
    """sha256 of :func:`dump_config`."""
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


# --------------------------------------------------------------------------
# keys -> config


def _num(keys, key, default=None):
    v = keys.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{key} must be a number, got {v!r}")
    return float(v)


def _str(keys, key, default=None):
    v = keys.get(key, default)
    if v is not None and not isinstance(v, str):
        raise ValidationError(f"{key} must be a string, got {v!r}")
    return v


def _build_kappa(keys):
    kind = _str(keys, "kappa", "composite" if "kappa.a" in keys else None)
    if kind is None:
        return None
    if kind == "identity":
        return IdentityFn()
    if kind != "composite":
        raise ValidationError(f"kappa must be 'composite' or 'identity', got {kind!r}")
    for key in ("kappa.a", "kappa.b", "kappa.rho"):
        if key not in keys:
            raise ValidationError(f"composite kappa requires {key}")
    try:
        return build_composite(_num(keys, "kappa.a"), _num(keys, "kappa.b"), _num(keys, "kappa.rho"))
    except (TypeError, CompositeError) as exc:
        raise ValidationError(f"kappa: {exc}") from exc


def _build_basis(keys, n):
    kind = _str(keys, "basis.kind")
    if kind is None:
        return None
    if kind == "polynomial":
        if "basis.monomials" not in keys:
            raise ValidationError("basis.kind = polynomial requires basis.monomials")
        terms = parse_polynomial(str(keys["basis.monomials"]), n)
        return PolynomialFeatures(tuple(e for _, e in terms))
    if kind == "rbf":
        centers = keys.get("basis.centers", [1.0, -1.0])
        width = _num(keys, "basis.width", 1.0)
        if not isinstance(centers, list) or not centers:
            raise ValidationError("basis.centers must be a non-empty list")
        if all(isinstance(c, list) for c in centers):
            pairs = tuple((int(i), float(c)) for i, c in centers)
        else:
            pairs = tuple((i, float(c)) for i in range(n) for c in centers)
        if any(not 0 <= i < n for i, _ in pairs):
            raise ValidationError("basis.centers coordinate index out of range")
        return RbfWithBias(pairs, width)
    raise ValidationError(f"basis.kind must be 'polynomial' or 'rbf', got {kind!r}")


def build_config(keys):
    """Assemble and validate a :class:`SimConfig` from parsed keys."""
    try:
        return _build_config(keys)
    except (ValueError, LinAlgError, TypeError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from exc


def _build_config(keys):
    known = {"variant", "kappa", "name", "preset"}
    prefixes = ("sim.", "plant.", "gains.", "params.", "kappa.", "basis.", "reference.", "compare.")
    for key in keys:
        if key not in known and not key.startswith(prefixes):
            raise ValidationError(f"unknown key {key!r}")

    variant = _str(keys, "variant")
    if variant is None:
        raise ValidationError("missing key 'variant'")
    try:
        variant = Variant(variant)
    except ValueError:
        raise ValidationError(f"unknown variant {variant!r}; choose from {[v.value for v in Variant]}") from None

    for key in ("plant.A", "plant.B", "gains.K1", "gains.K2"):
        if key not in keys:
            raise ValidationError(f"missing key {key!r}")
    A = np.asarray(keys["plant.A"], dtype=float)
    B = np.asarray(keys["plant.B"], dtype=float)
    if B.ndim != 2 or A.ndim != 2:
        raise ValidationError("plant.A and plant.B must be nested lists (matrices)")
    n, m = B.shape
    channels = []
    for j in range(1, m + 1):
        text = keys.get(f"plant.delta.{j}", "0")
        channels.append(() if str(text).strip() in ("0", "0.0") else parse_polynomial(str(text), n))
    lam = keys.get("plant.lambda", [1.0] * m)
    plant = PlantSpec(A, B, np.atleast_1d(np.asarray(lam, dtype=float)), TrueUncertainty(tuple(channels)),
                      keys.get("plant.x0", [0.0] * n))

    for key in keys:
        if key.startswith("params.") and key[len("params."):] not in PARAM_KEYS:
            raise ValidationError(f"unknown parameter {key!r}")
    pkw = {name: _num(keys, f"params.{name}") for name in PARAM_KEYS if name != "R"}
    pkw = {k: v for k, v in pkw.items() if v is not None}
    if "params.R" in keys:
        pkw["R"] = np.asarray(keys["params.R"], dtype=float)
    params = SymbioticParams(kappa=_build_kappa(keys), **pkw)

    for key in keys:
        if key.startswith("sim.") and key[len("sim."):] not in SIM_KEYS:
            raise ValidationError(f"unknown key {key!r}")
        if key.startswith("reference.") and key[len("reference."):] not in REF_KEYS:
            raise ValidationError(f"unknown key {key!r}")
    ref_kw = {}
    for short, attr in REF_KEYS.items():
        if f"reference.{short}" in keys:
            ref_kw[attr] = _str(keys, f"reference.{short}") if short == "kind" else _num(keys, f"reference.{short}")
    stride = keys.get("sim.record_stride", 10)
    if isinstance(stride, bool) or not isinstance(stride, int):
        raise ValidationError("sim.record_stride must be an integer")

    cfg = SimConfig(
        variant=variant,
        plant=plant,
        gains=Gains(keys["gains.K1"], keys["gains.K2"]),
        params=params,
        basis=_build_basis(keys, n),
        reference=ReferenceSignal(**ref_kw),
        dt=_num(keys, "sim.dt", 1e-3),
        t_final=_num(keys, "sim.t_final", 100.0),
        record_stride=stride,
        track_oracle=bool(keys.get("sim.track_oracle", False)),
    )
    validate_config(cfg)
    return cfg


def _split_compare(keys):
    base, runs = {}, {}
    for key, value in keys.items():
        if not key.startswith("compare."):
            base[key] = value
            continue
        rest = key[len("compare."):]
        label, _, sub = rest.partition(".")
        if not label or not sub:
            raise ValidationError(f"bad comparison key {key!r}; expected compare.<label>.<key>")
        if not sub.startswith(COMPARE_PREFIXES):
            raise ValidationError(f"{key}: comparison runs may only change variant, params, kappa or basis")
        runs.setdefault(label, {})[sub] = value
    return base, runs


def _expand_preset(keys):
    name = keys.get("preset")
    if name is None:
        return keys, None
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    sc = preset(name)
    merged = dict(config_items(sc.config))
    for label, cfg in sc.runs()[1:]:
        for k, v in config_items(cfg).items():
            if k.startswith(COMPARE_PREFIXES):
                merged[f"compare.{label}.{k}"] = v
    parsed = parse_text("".join(f"{k} = {v}\n" for k, v in merged.items()))
    parsed.update({k: v for k, v in keys.items() if k != "preset"})
    return parsed, name


def read_keys(path):
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read(), path=str(path))


def load_scenario(source):
    """
    Scenario from a preset name or a config file.

    Comparison runs inherit every base key they do not override.
    """
    if source in PRESETS and not os.path.exists(source):
        return preset(source)
    keys, preset_name = _expand_preset(read_keys(source))
    base, runs = _split_compare(keys)
    cfg = build_config(base)
    comparisons = []
    for label, over in runs.items():
        if over.get("kappa") == "identity":
            merged = {k: v for k, v in base.items() if not k.startswith("kappa.")}
        else:
            merged = dict(base)
        merged.update(over)
        try:
            run_cfg = build_config(merged)
        except ConfigError as exc:
            raise ValidationError(f"compare.{label}: {exc}") from exc
        comparisons.append((label, {"variant": run_cfg.variant, "params": run_cfg.params, "basis": run_cfg.basis}))
    default_name = preset_name or os.path.splitext(os.path.basename(str(source)))[0]
    name = _str(base, "name", default_name)
    return Scenario(name, cfg, comparisons)


def load_config(source):
    """
    Validated base :class:`SimConfig` from a preset name or config file.

    Raises
    ------
    ParseError
        Malformed line, with its line number.
    ValidationError
        Names the first violated invariant.
    OSError
        The file cannot be read.
    """
    return load_scenario(source).config
