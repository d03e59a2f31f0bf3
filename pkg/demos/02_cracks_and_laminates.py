# %% [markdown]
# # Opening cracks and building laminates
#
# A crack-opening map is the identity away from a thin triangle around the
# crack and pushes the upper lip up, leaving a small triangular hole. It
# approaches the identity as the opening parameter shrinks.

# %%
import numpy as np

from brittle_membrane.crack_geometry import CrackPath, build_crack_diffeo, certify_bounds, sup_distance_to_identity
from brittle_membrane.energy_density import BuiltinOgden, ReducedDensity
from brittle_membrane.laminates import (
    LaminateParams,
    energy_identity,
    laminate_energy,
    sigma_lp_bound,
    sigma_lp_integral,
    two_point_limit,
)

straight = CrackPath(np.array([[0.0, 0.0], [1.0, 0.0]]))
bent = CrackPath(np.array([[0.0, 0.0], [0.5, 0.3], [1.0, 0.0]]))

# %%
for name, c in [("straight", straight), ("bent", bent)]:
    print(name)
    for k in range(1, 7):
        d = 2.0**-k
        m = build_crack_diffeo([c], d)
        d0, d1 = sup_distance_to_identity(m)
        print(f"  delta={d:<9g} |Phi-Id|={d0:.3e} |DPhi-I|={d1:.3e} certified={certify_bounds(m).passed}")

# %%
m = build_crack_diffeo([straight], 0.1)
x = np.random.default_rng(1).uniform(-0.5, 1.5, (5, 2))
print(np.abs(m.inverse(m(x)) - x).max())
print("hole:", m.holes[0])

# %% [markdown]
# ## Laminates
#
# The laminate field oscillates between `A - lam b (x) a` and
# `A + (1 - lam) b (x) a` in `n` strips, with thin transition layers. Its
# energy converges to the two-point average at rate `1/n`.

# %%
W0 = ReducedDensity(BuiltinOgden(2, 1))
E12 = np.eye(3)[:, :2]
b = np.array([0.0, 0.0, 1.0])
limit = two_point_limit(W0, LaminateParams(E12, (1, 0), b, 0.5, 4))
prev = None
for n in [4, 8, 16, 32, 64]:
    P = LaminateParams(E12, (1, 0), b, 0.5, n)
    e = laminate_energy(W0, P).value
    r = e - limit
    print(f"n={n:<3d} energy={e:.12f} identity={energy_identity(W0, P):.12f} residual={r:.3e}"
          + (f" ratio={r / prev:.4f}" if prev else ""))
    prev = r

# %%
for p in (1.5, 2, 3):
    print(p, [f"{sigma_lp_integral(8, lam, p) / sigma_lp_bound(8, lam, p):.3f}" for lam in (0.25, 0.5, 0.75)])
