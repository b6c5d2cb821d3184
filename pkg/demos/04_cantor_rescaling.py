# %% [markdown]
# # Kernel density estimates on the Cantor set
#
# The Cantor distribution has Hausdorff dimension `d = ln 2 / ln 3`.  At
# points of the Cantor set the kernel estimate blows up like `h^(d-1)`, so
# `h^(1-d) f_hat(x)` stays bounded; in a removed gap it tends to zero.

# %%
from genfun.experiments import make_config, run_experiment

report = run_experiment(make_config("cantor-rescale", n_grid=(2**18,)))
header, rows = report.tables["rescaled"]
for x, where, h, fhat, se, rescaled in rows:
    if h in (2**-3, 2**-6, 2**-9):
        print(f"x={x:<5} ({where})  h=2^{int(round(__import__('math').log2(h)))}  "
              f"f_hat={fhat:9.4f}  rescaled={rescaled:.4f}")
print("status:", report.status, " max ratio:", round(report.summary["max_ratio"], 3))

# %% [markdown]
# ## Bridges for a singular cdf
#
# On its quantile grid the Cantor bridge has covariance `F(s ^ t) - F(s) F(t)`;
# at `x = 1/3` the variance is `0.25`.

# %%
from genfun.limitproc import bridge_draws
from genfun.models import cantor_model

d = bridge_draws(cantor_model(), 20_000, seed=0, grid=[1 / 9, 1 / 3, 2 / 3])
print("F at grid:", d.levels, " variance at 1/3:", round(float(d.values[:, 1].var()), 4))
