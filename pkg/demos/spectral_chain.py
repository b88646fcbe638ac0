# coding: utf-8

# # From transfer matrices to the continuum eigenvalue
#
# The exponential moment E[exp(sum_k f(S_k / alpha) / alpha^2); stay in the box]
# is a power of a symmetric transfer matrix.  Its log, scaled by alpha^2/n,
# approaches the top eigenvalue of (1/2) Laplacian + f in two steps: first
# n -> infinity at fixed alpha (the lattice Perron root), then alpha -> infinity.

# In[1]:

import numpy as np

from rwrs.kernels import make_srw
from rwrs.spectral import (
    PotentialProblem,
    TransferMatrix,
    convergence_table,
    discrete_dirichlet_form,
    lattice_sample,
    potential,
    principal_eigenvalue_continuum,
)

srw = make_srw(1)


def well(x):
    return 2.0 * np.exp(-x * x)


# ## The continuum eigenvalue

# In[2]:

res = principal_eigenvalue_continuum(PotentialProblem(potential(well, 4.0, 2048)))
lam = res.value
print(f"lambda_R(f) on Q_4: {lam:.6f}")


# ## The two-step limit

# In[3]:

rows = convergence_table(srw, well, 4.0, [4.0, 8.0], [4, 16, 64], m=2048)
for r in rows:
    print(f"alpha={r['alpha']:4.0f}  T={r['T']:3d}  n={r['n']:6d}  value {r['value']:.5f}"
          f"  lattice limit {r['lattice_eig']:.5f}")


# ## Dirichlet against periodic boxes
#
# Killing the walk at the boundary can only lower the Perron root.

# In[4]:

for bc in ("dirichlet", "periodic"):
    t = TransferMatrix.build(srw, well, 4.0, 8.0, bc)
    print(bc, round(t.lattice_limit(), 6))


# ## The discrete Dirichlet form
#
# Sampling a smooth unit function on the lattice at spacing 1/alpha, the
# lattice form times alpha^2 approaches half the continuum energy.

# In[5]:

def bump(x):
    return np.exp(-x * x / 2) / np.pi**0.25


for alpha in (4, 8, 16):
    g = lattice_sample(bump, alpha, 8.0, 1)
    print(f"alpha={alpha:3d}  alpha^2 * form = {alpha**2 * discrete_dirichlet_form(srw, g):.6f}")
# |psi'|^2 integrates to 1/2 for this unit Gaussian
print("(1/2) |psi'|^2 =", 0.25)
