"""Solvers and checks for time-fractional quasilinear evolution equations.

Modules: :mod:`kernels` (fractional calculus primitives), :mod:`operators`
(discrete Gelfand triples and monotone operators), :mod:`stepper`
(implicit time marching), :mod:`stochastic` (additive fractional noise),
:mod:`abstractcore` (space-time Yosida reenactment) and :mod:`cli`.
"""

__version__ = "0.1.0"
