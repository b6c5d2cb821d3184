"""Density, distribution and conditional-moment estimators evaluated as generalized functions.

Every object is reported through its pairing with a compactly supported
test function.  Submodules:

``testspace``   test functions, derivatives, partitions of unity
``kernels``     compactly supported kernels of a given order, bandwidth laws
``models``      reference distributions with exact cdfs and seeded samplers
``quadrature``  deterministic box, Stieltjes and empirical integration
``pairing``     estimator pairings and their exact oracles
``limitproc``   Brownian bridges and the Gaussian limit functionals
``experiments`` Monte Carlo verification harness
``cli``         batch front end
"""

__version__ = "0.1.0"
ARTIFACT_VERSION = f"genfun-{__version__}"
