"""
Raise the fixed gain and watch the closed loop approach the nominal one.

Each alpha is a separate simulation; the sweep compares them against the
same nominal run and writes a small table.

    python3 demos/alpha_sweep.py
"""

import os

from _common import out_dir
from symctl.cli import sweep_alpha, write_sweep
from symctl.scenarios import nonparametric_config, parametric_config

for name, base in (("parametric", parametric_config()), ("nonparametric", nonparametric_config())):
    rows = sweep_alpha(base, [1.0, 3.0, 9.0])
    path = os.path.join(out_dir("sweep"), f"{name}_sweep.csv")
    write_sweep(rows, path)
    print(f"{name}: " + ", ".join(f"alpha={r.alpha:g} ise={r.ise:.3g}" for r in rows))
    print(f"  wrote {path}")
