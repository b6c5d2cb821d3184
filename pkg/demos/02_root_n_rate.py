# %% [markdown]
# # Root-n convergence of paired kernel estimates
#
# The pairing error `(f_hat - f, psi)` shrinks like `n^-1/2` when the
# bandwidth decays fast enough for the bias to be negligible.  This runs a
# reduced rate experiment on the atom-mixture model and fits the log-log slope.

# %%
from genfun.experiments import make_config, run_experiment

cfg = make_config("rate", model="atom", n_grid=(2**9, 2**10, 2**11, 2**12, 2**13), reps=100,
                  psi=("bump:0.5:0.3",), slope_tol=0.15)
report = run_experiment(cfg)
for n, rmse in report.rmse.items():
    print(f"n={n:5d}  RMSE={rmse:.3e}")
print(f"slope {report.slope:.3f}, 95% CI {report.slope_ci[0]:.3f}..{report.slope_ci[1]:.3f}")

# %% [markdown]
# ## The bias term
#
# For Beta(2,2) the density is quadratic, so a second-order kernel leaves a
# bias of exactly `h^2 * mu_2 / 2 * int f'' psi`, which is `-1.2 h^2 int psi`.

# %%
from genfun.kernels import epanechnikov
from genfun.models import beta_model
from genfun.pairing import bias_functional
from genfun.testspace import make_poly_bump

psi = make_poly_bump(0.5, 0.25)
for h in (0.2, 0.1, 0.05):
    b = bias_functional(beta_model(), epanechnikov(), h, psi).extra["bias"]
    print(f"h={h:<5} leading bias {b:+.6e}")

# %% [markdown]
# ## Covariance and Gaussian limit
#
# `sqrt(n) (f_hat - f, psi_j)` is asymptotically Gaussian with covariance
# `cov(psi_1(X), psi_2(X))`.

# %%
var = run_experiment(make_config("variance", n_grid=(2**12,), reps=200))
print("variance:", var.status, "max relative error", round(var.summary["max_rel_error"], 4))
gau = run_experiment(make_config("gaussianity", n_grid=(2**12,), reps=200))
print("gaussianity:", gau.status, "smallest KS p-value", round(gau.summary["min_p"], 3))
