"""
Four controllers on the double integrator with a polynomial uncertainty that
the regressor can represent exactly.

Every run is compared against the nominal loop (no uncertainty, full control
effectiveness). The symbiotic design with the larger fixed gain stays closest.

    python3 demos/parametric_comparison.py
"""

from _common import out_dir
from symctl.cli import run_scenario
from symctl.scenarios import preset

sc = preset("parametric-fig2")
records = run_scenario(sc, out_dir("parametric"))

print(f"{'run':34s} {'ise':>10s} {'sup_err':>10s} {'effort':>10s}")
for r in records:
    print(f"{r.label:34s} {r.ise:10.4g} {r.sup_err:10.4g} {r.effort:10.4g}")
print(f"plot with: gnuplot -p {out_dir('parametric')}/{sc.name}.gp")
