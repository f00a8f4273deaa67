"""torscat: separable toric-cylinder geometries at fixed energy.

Builds orthogonal separable metrics on (0, A) x T^2 from 3x3 coefficient
matrices, computes the coupled spectrum of the two commuting angular
operators, assembles singular radial Schrodinger problems and their
characteristic / Weyl-Titchmarsh data and partial scattering matrices,
and verifies whether two such geometries are gauge-equivalent from
their scattering data.
"""

__version__ = "0.1.0"
