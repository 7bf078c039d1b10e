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

# # Moving the relay in Rayleigh fading
#
# Source at (0, 0), destination at (1, 0), eavesdropper at (0, 1) and the
# relay at (d, 0). Each block of fading states is treated as a parallel
# channel and powers are averaged over the block. The state count is kept
# small so this runs in a few minutes.

# +
from secrelay import Geometry, PowerBudget
from secrelay.fading import FadingScenario, format_sweep_csv, sweep_relay_position

scen = FadingScenario(geometry=Geometry(gamma=2.0, min_distance=0.05),
                      budget=PowerBudget(64, 64), n_states=8, seed=42)
rows = sweep_relay_position(scen, [0.1, 0.5, 1.5])
print(format_sweep_csv(rows))
# -

# Near the source, decode-and-forward is best. Near the destination, the
# relay does better jamming the eavesdropper. Picking the mode state by state
# (hybrid_best) is never worse than either.

# +
table = {}
for r in rows:
    table.setdefault(r.d, {})[r.scheme] = r.rate_bits
for d, v in table.items():
    best = max(v, key=lambda s: v[s] if s != "upper" else -1)
    print(f"d={d}: best achievable scheme {best}")
