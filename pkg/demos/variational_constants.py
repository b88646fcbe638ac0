# coding: utf-8

# # Variational constants on a box
#
# The rate constants are minima of energy-plus-cost functionals over unit
# L^2 functions on a box.  With one dimension, p = q = 2 and D = 1/2 the
# minimizer is a sech profile, which gives a closed-form check.

# In[1]:

import numpy as np

from rwrs.scenery import GaussianScenery
from rwrs.varsolve import (
    RateProblem,
    K_from_chi,
    rescaled_K_objective,
    solve_chi,
    solve_K_Dq,
    solve_K_H,
    trial_sequence_chi_zero,
)

closed = 3 * 0.25 ** (2 / 3) * 1.5 ** (1 / 3)


# ## K_{D,q} and chi

# In[2]:

k = solve_K_Dq(RateProblem(d=1, D=0.5, q=2.0, R=8.0, m=256))
print(f"K numeric {k.value:.6f}  closed form {closed:.6f}  converged {k.converged}")

chi = solve_chi(RateProblem(d=1, mode="chi", q=2.0, R=8.0, m=256))
print(f"chi direct {chi.route_a:.5f}  from K {chi.route_b:.5f}  kappa {chi.kappa:.5f}")
print(f"K rebuilt from chi {K_from_chi(chi.route_a, 1, 0.5):.6f}")


# ## Scaling in the threshold u
#
# For a power cumulant K_H(u) is exactly u^{4/3} K.  A unit Gaussian scenery
# has H(t) = t^2/2, which is that power case.

# In[3]:

us = np.array([0.5, 1.0, 2.0, 4.0])
vals = np.array([solve_K_H(RateProblem(d=1, mode="K_H", scenery=GaussianScenery(1.0), u=u, R=8.0, m=256)).value
                 for u in us])
slope = np.polyfit(np.log(us), np.log(vals), 1)[0]
print("K_H(u):", np.round(vals, 5), f" log-log slope {slope:.4f} (4/3 = {4 / 3:.4f})")


# ## Where chi vanishes
#
# Above d = 2q a spreading trial sequence keeps both norms fixed while the
# gradient energy disappears, so the dilation-optimized objective goes to 0.

# In[4]:

for n in (10, 100, 1000):
    t = trial_sequence_chi_zero(5, 2.0, n)
    obj = rescaled_K_objective(t.l2_sq, t.l2p_pow, t.half_grad_sq, 5, 2.0)
    print(f"n={n:5d}  (1/2)|grad|^2 = {t.half_grad_sq:.4e}  objective {obj:.4e}  quad gap {t.quad_gap:.1e}")
print(f"norms at n=1000 over their limits: {t.l2_sq / t.limits[0]:.5f}, {t.l2p_pow / t.limits[1]:.5f}")
