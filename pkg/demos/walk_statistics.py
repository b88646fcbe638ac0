# coding: utf-8

# # Walks, local times and tail probabilities
#
# A random walk in random scenery adds up the scenery values it meets:
# Z_n = sum_k Y(S_k) = sum_z Y(z) l_n(z).  Everything about Z_n given the walk
# runs through the local times l_n, and for a Gaussian scenery only through
# the self-intersection local time Lambda_n = sum_z l_n(z)^2.

# In[1]:

import math

import numpy as np
from scipy import special

from rwrs.kernels import make_srw
from rwrs.localtimes import lambda_samples, simulate_walk
from rwrs.scenery import GaussianScenery
from rwrs.tails import ScaleRegime, cond_gaussian_series, exact_enum, tail_cond_gaussian, tail_naive

srw1, srw2 = make_srw(1), make_srw(2)
gauss = GaussianScenery(1.0)


# ## One walk

# In[2]:

path, lt = simulate_walk(srw2, 2000, seed=1)
print("positions:", lt.n, " distinct sites:", lt.range, " Lambda:", lt.lam)
print("most visited site count:", lt.values().max())


# ## Self-intersections in the plane
#
# In d = 2 the mean of Lambda_n grows like (2/pi) n log n, with a slowly
# decaying correction.  The same walks are observed at each checkpoint.

# In[3]:

ns = [2**8, 2**10, 2**12]
lam = lambda_samples(srw2, ns, 2000, seed=2)
for j, n in enumerate(ns):
    print(f"n = {n:5d}   E[Lambda]/(n log n) = {lam[:, j].mean() / (n * math.log(n)):.4f}")
print(f"2/pi = {2 / math.pi:.4f}")


# ## Tail estimators against enumeration
#
# For short one-dimensional walks every path can be enumerated, and with a
# Gaussian scenery P(Z_n > nb | walk) is an explicit normal tail.

# In[4]:

b = 0.5
for n in (2, 3, 8):
    exact = exact_enum(srw1, gauss, n, b)
    naive = tail_naive(srw1, gauss, n, b, 200_000, seed=3)
    cond = tail_cond_gaussian(srw1, gauss, n, b, 20_000, seed=4)
    print(f"n={n}: exact {exact:.5f}  naive {naive.estimate:.5f} +- {naive.stderr:.5f}"
          f"  conditional {cond.estimate:.5f} +- {cond.stderr:.5f}")

# Z_2 = Y(0) + Y(S_1) is N(0, 2), so P(Z_2 > 2) is a single normal tail.
print("P(Z_2 > 2):", exact_enum(srw1, gauss, 2, 1.0), special.ndtr(-math.sqrt(2)))


# ## Small deviations in the plane
#
# With b_n = n^{-1/2} (log n)^{3/4} the normalized log-probability drifts
# slowly toward -pi/4.  At these n it is still far away.

# In[5]:

regime = ScaleRegime.small_dev(0.75)
for e in cond_gaussian_series(srw2, gauss, [2**10, 2**12], regime.b, 2000, seed=5):
    print(f"n = {e.n:5d}   rate-normalized {e.normalize(regime).rate_normalized:.4f}")
print(f"-pi/4 = {-math.pi / 4:.4f}")
