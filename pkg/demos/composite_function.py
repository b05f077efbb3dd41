"""
Build the composite shaping function used by the symbiotic laws and look at it.

The function is linear with slope ``rho`` near the origin, the identity for
large arguments, and a quintic bridge in between chosen so the pieces meet
with matching value, slope and curvature.

    python3 demos/composite_function.py
"""

import os

import numpy as np

from _common import out_dir
from symctl.cli import write_composite
from symctl.composite import build_composite, kappa_eval

f = build_composite(a=1.0, b=2.0, rho=0.1)
print("quintic coefficients:", np.round(f.psi, 6))
print(f"slope range on the bridge: [{f.min_slope:.4f}, {f.max_slope:.4f}]")

# values either side of the two joints
h = 1e-6
for z in (f.a, f.b):
    lo, hi = kappa_eval(f, z - h), kappa_eval(f, z + h)
    print(f"z = {z:g}: left {np.round(lo, 5)}  right {np.round(hi, 5)}")

# small errors are attenuated by rho, large ones pass through unchanged
for z in (0.5, 1.5, 3.0):
    k, dk, _ = kappa_eval(f, z)
    print(f"kappa({z}) = {k:.4f}, kappa'({z}) = {dk:.4f}")

csv_path, script = write_composite(f, os.path.join(out_dir("composite"), "kappa.csv"))
print(f"wrote {csv_path}; plot with: gnuplot -p {script}")
