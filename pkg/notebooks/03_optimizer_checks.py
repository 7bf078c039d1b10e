# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Checking the optimizer
#
# The bounds are not concave in the powers, so the optimizer uses many
# starts. On small problems an exhaustive lattice search tells us how
# close it gets.

# +
import numpy as np

from secrelay import (PowerBudget, finite_diff_check, grid_oracle, make_channel,
                      maximize_deaf, maximize_lower, maximize_upper)
from secrelay.channel import ModeAssignment
from secrelay.cli import random_interior_point

ch = make_channel([1.0, 0.4], [0.7, 1.2], [1.1, 2.5], [2.0, 3.5], [0.6, 0.3])
b = PowerBudget(3.0, 2.0)
modes = ModeAssignment(("DF", "NF"))

for kind, res in [("lower", maximize_lower(ch, b, modes)),
                  ("upper", maximize_upper(ch, b)),
                  ("deaf", maximize_deaf(ch, b))]:
    ref = grid_oracle(ch, b, kind, 61, modes if kind == "lower" else None)
    print("%-5s optimizer %.5f  lattice %.5f" % (kind, res.value, ref.value))
# -

# Analytic gradients against Richardson-extrapolated central differences
# at a random interior point:

rng = np.random.default_rng(3)
pt = random_interior_point(rng, len(ch), b)
for kind in ("lower", "upper", "deaf"):
    err = finite_diff_check(kind, ch, b, pt, modes if kind == "lower" else None)
    print(kind, "%.1e" % err)
