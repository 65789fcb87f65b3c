"""Additive and restricted overlapping Schwarz methods for Poisson on the unit square/interval.

Modules: :mod:`linalg`, :mod:`poisson_fem`, :mod:`decomposition`, :mod:`spaces`,
:mod:`operators`, :mod:`diagnostics`, :mod:`cli`.
"""
__version__ = "0.1.0"
