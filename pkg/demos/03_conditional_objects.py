# %% [markdown]
# # Conditional distributions and means as functionals
#
# Conditional objects are paired with test functions in copula coordinates
# `a = F_x(x)`.  The estimators use the empirical copula, so no bandwidth is
# needed in `x`.  Their limit laws are functionals of Brownian bridges.

# %%
import numpy as np
from numpy.polynomial import Polynomial

from genfun.models import regression_model, uniform_model
from genfun.pairing import (condmean_estimator_pair, condmoment_pair_oracle,
                            conddist_estimator_pair, conddist_pair_oracle)
from genfun.testspace import make_partition_of_unity, make_poly_bump

model = regression_model(uniform_model(1), Polynomial([1.0, 2.0]), 1.0)
psi = make_poly_bump(0.5, 0.3)
partition = make_partition_of_unity(-6.0, 9.0, 0.5)

dist_truth = conddist_pair_oracle(model, psi, 1.5).value
mean_truth = condmoment_pair_oracle(model, psi, partition).value
print(f"(F_y|x(1.5 | .), psi) = {dist_truth:.6f}    (m, psi) = {mean_truth:.6f}")

for n in (2**10, 2**12, 2**14):
    s = model.sample(n, seed=2)
    d = conddist_estimator_pair(s, psi, 1.5).value
    m = condmean_estimator_pair(s, psi, partition).value
    print(f"n={n:6d}  conddist error {d - dist_truth:+.2e}   condmean error {m - mean_truth:+.2e}")

# %% [markdown]
# ## Limit law
#
# Draws of the bridge functional reproduce the finite-sample spread of
# `sqrt(n) (F_hat - F, psi)`.

# %%
from genfun.limitproc import limit_law_sample

draws = limit_law_sample(model, [psi], "conddist", reps=4000, seed=0, y=1.5)
n = 2**12
finite = np.array([np.sqrt(n) * (conddist_estimator_pair(model.sample(n, seed=s), psi, 1.5).value
                                 - dist_truth) for s in range(400)])
print(f"limit variance {draws.cov[0, 0]:.5f}   finite-sample variance {finite.var(ddof=1):.5f}")
