"""Counting processes time-changed by subordinators and their inverses.

Modules: ``bernstein`` (Laplace exponents), ``specfun`` (Mittag-Leffler and
Wright functions), ``laplace`` (inverse-subordinator transforms), ``pathsim``
(Monte Carlo), ``gfcalc`` (convolution-type derivatives), ``counting`` (pmfs,
pgfs, governing equations) and ``cli``.
"""

__version__ = "0.1.0"
