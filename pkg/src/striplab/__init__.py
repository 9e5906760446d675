"""Numerical laboratory for heat flow in curved strips.

Subpackages cover the strip metric and its certificates (geometry), weighted
form assembly and spectral quantities (spectral), semigroup evolution and
decay fits (evolution), killed-diffusion Monte Carlo (stochastic), flat-strip
closed forms (oracle) and the experiment runner (cli).
"""

__version__ = "0.1.0"
