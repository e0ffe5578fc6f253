"""
Kasner backgrounds and fluid regimes
====================================

Walks through the exponents of the background, the rescaling exponents of
the fluid and the split into stable, borderline and unstable sound speeds.
"""

import numpy as np

from kasner_fluids import FluidParameters, KasnerBackground, exponents_from_K, normalize_K
from kasner_fluids.fluid_params import gamma_window

# The vacuum exponents depend on a single velocity K; K = 0 gives (-1/3, 2/3, 2/3).
for K in (0.0, 0.5, 0.9):
    bg = KasnerBackground(K)
    print(f"K={K:.1f}  p={np.round(bg.p, 4)}  residual={bg.relation_residual():.1e}")

# Any real K other than +-1 is equivalent to a K' in [0, 1) up to relabelling the axes.
for K in (-0.5, 2.0, 5.0):
    Kp, perm = normalize_K(K)
    print(f"K={K:+.1f} -> K'={Kp:.4f}, axes {perm}")

# A scalar field shrinks the sum of squares to 1 - A^2 and near-isotropizes the background.
bg = KasnerBackground(np.sqrt(3.0), np.sqrt(2.0 / 3.0))
print("isotropic scalar-field background p =", np.round(bg.p, 6))

# The fluid is stable when the sound speed squared exceeds every exponent.
for K in (0.0, 0.5):
    lo, hi = gamma_window(K)
    print(f"K={K}: stable for {lo:.4f} < gamma < {hi:.0f}")

for gamma in (1.2, 5.0 / 3.0, 1.8):
    p = FluidParameters(gamma, KasnerBackground(0.0))
    print(f"gamma={gamma:.4f}  regime={p.regime:10s}  G={np.round(p.G, 4)}")

# In the stable regime the leading-order construction needs ell > G1/q members.
p = FluidParameters(1.8, KasnerBackground(0.0))
print(f"q={p.q:.3f}, minimal ell={p.ell}, eps(ell=7)={p.with_ell(7).eps:.3f}")
print("exponents at K=1 (flat Kasner):", exponents_from_K(1.0))
