"""
The ODE oracles
===============

Three exactly or nearly exactly solvable problems that the PDE machinery is
checked against: the scalar Fuchsian model, the Q-equation with its first
integral, and spatially homogeneous fluids.
"""

import numpy as np

from kasner_fluids import FluidParameters, KasnerBackground
from kasner_fluids.ode_oracles import (
    ModelSolution,
    frame_history,
    homogeneous_euler,
    model_exact,
    q_equation,
)

# u' = (b/t) u + F: the limit of t^{-b} u at t = 0 is the asymptotic datum.
m = ModelSolution(b=0.5, F=lambda s: s**2, t_star=0.5, u_star=1.0)
ut = m.asymptotic_datum()
m0 = ModelSolution(b=0.5, F=lambda s: s**2, u_tilde_star=ut)
for t in (0.3, 0.01):
    print(f"t={t}: backward {model_exact(m, t):.12f}  forward {model_exact(m0, t):.12f}")

# Stable side: Q settles to a constant and the first integral is conserved.
tr = q_equation(0.9, 1, 0.5, (1.0, 1e-3))
print(f"Q(1e-3)={tr.Q[-1]:.6f}, invariant drift {tr.max_drift:.1e}")

# Unstable side: Q grows like tau / sqrt(1 - cs2).
tr = q_equation(0.75, -1, 0.5, (1.0, 1e-4))
print(f"Q/tau={tr.Q[-1] / tr.tau[-1]:.6f}, expected {1 / np.sqrt(0.25):.6f}")

# Homogeneous fluids: constant frame components on the borderline...
p = FluidParameters(5.0 / 3.0, KasnerBackground(0.0))
h = homogeneous_euler([1.0, 0.0, 0.0, 0.3], p, (-0.5, -1e-8))
W = frame_history(h.t, h.U, p)
print("borderline W0, W3 spread:", np.ptp(W[:, 0]), np.ptp(W[:, 3]))

# ...and a fluid vector tilting toward the null cone below it.
p = FluidParameters(1.2, KasnerBackground(0.0))
h = homogeneous_euler([1.0, 0.0, 0.0, 0.6], p, (-0.5, -1e-12))
print("unstable:", h.diagnostic, f"(t~ = {h.t_tilde_lost:.3e})")
