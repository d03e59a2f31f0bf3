# %% [markdown]
# # Membrane density and its lamination envelope
#
# The membrane density of a stored energy is the minimum over the fiber
# vector of `W(A | xi)`. For the built-in Ogden-type family with `p = 2`,
# `s = 1` it has the closed form `|A|^2 + kappa * det(A^T A)^(-1/3)` with
# `kappa = 3 * 2^(-2/3)`; below we compare that to the numerical reduction
# and then watch the lamination search lower it at a non-convex point.

# %%
import numpy as np

from brittle_membrane.energy_density import BuiltinOgden, ReducedDensity, reduced_density
from brittle_membrane.envelopes import COARSE, rank_one_envelope
from brittle_membrane.linalg import gram_det

W = BuiltinOgden(2, 1)
W0 = ReducedDensity(W)
kappa = 3 * 2 ** (-2 / 3)

# %%
rng = np.random.default_rng(0)
for _ in range(4):
    A = rng.normal(size=(3, 2))
    closed = np.sum(A**2) + kappa * gram_det(A) ** (-1 / 3)
    print(f"closed form {closed:.10f}  batched {W0(A):.10f}  multistart {float(reduced_density(W, A)):.10f}")

# %% [markdown]
# Columns becoming parallel make the barrier blow up, but only like
# `t^(-2/3)` along a straight path.

# %%
e1, e2 = np.eye(3)[:, 0], np.eye(3)[:, 1]
for t in [1e-1, 1e-3, 1e-6, 1e-9, 0.0]:
    A = np.column_stack([e1, t * e2 + (1 - t) * e1])
    print(f"t={t:<8g} W0={W0(A):.6g}")

# %% [markdown]
# ## Lamination
#
# A matrix with a short second column sits where `W0` is not rank-one
# convex; splitting it along a rank-one segment pays off.

# %%
A = np.array([[1.0, 0.2], [0.0, 0.3], [0.0, 0.0]])
res = rank_one_envelope(W0, A, 3, budget=COARSE)
print("W0(A)          ", W0(A))
print("R_i by depth   ", [round(v, 6) for v in res.history])
print("lower bound    ", res.lower_bound)
split = res.tree.split
print("root split: a =", split.a.round(4), "b =", split.b.round(4), "lambda =", split.lam)
