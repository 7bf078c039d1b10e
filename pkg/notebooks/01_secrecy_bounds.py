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

# # Secrecy bounds on a parallel relay channel
#
# Two subchannels, a source, a relay, a destination and an eavesdropper.
# Noise variances are given per receiver and the relay links enter through
# the SNR ratios rho1 (relay to destination) and rho2 (relay to eavesdropper).

# +
import numpy as np

from secrelay import (PowerBudget, make_channel, maximize_lower, maximize_upper,
                      maximize_deaf, detect_deaf_capacity, uniform_allocation,
                      lower_bound_value)
from secrelay.channel import ModeAssignment

ch = make_channel(sigma2_relay=[0.5, 2.0], sigma2_dest=[1.0, 1.0],
                  sigma2_eve=[1.5, 0.8], rho1=[3.0, 0.5], rho2=[0.2, 2.0])
budget = PowerBudget(4.0, 2.0)
# -

# Uniform powers are the baseline. Each subchannel gets a relay mode:
# decode-and-forward (DF) or noise forwarding (NF).

# +
uni = uniform_allocation(ch, budget)
for labels in [("DF", "DF"), ("NF", "NF"), ("DF", "NF"), ("NF", "DF")]:
    modes = ModeAssignment(labels)
    opt = maximize_lower(ch, budget, modes)
    print(labels, "uniform %.4f  optimized %.4f" % (
        max(0.0, lower_bound_value(ch, modes, uni)), opt.value))
# -

# The upper bound lets the source and relay signals correlate with any
# coefficient psi in [-1, 1].

up = maximize_upper(ch, budget)
print("upper %.4f" % up.value, "psi", np.round(up.allocation.psi, 3))

# ## A relay that cannot hear the source
#
# When the relay is useless as a forwarder it can still jam. With no relay
# link to the eavesdropper (rho2 = 0) and a noisier eavesdropper, the two
# jamming bounds meet and give the secrecy capacity.

# +
deaf = make_channel([9.0, 9.0], [1.0, 1.0], [2.0, 3.0], [1.0, 2.0], [0.0, 0.0])
cap = detect_deaf_capacity(deaf, budget)
print("capacity", cap.capacity)
print("jamming, unconstrained %.6f" % maximize_deaf(deaf, budget).value)
print("jamming, constrained   %.6f" % maximize_deaf(deaf, budget, require_condition=True).value)
# -

# Flip the roles (rho1 = 0, rho2 > 0) and the bounds no longer coincide.

print("capacity", detect_deaf_capacity(make_channel(1.0, 1.0, 1.0, 0.0, 2.0),
                                        PowerBudget(1, 1)).capacity)
