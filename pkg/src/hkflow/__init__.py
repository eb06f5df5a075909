"""Numerical toolkit for translating graphs under powers of mean curvature.

Solves ``a^{ij}(Du) D_ij u + (1 + |Du|^2)^((3 - alpha)/2) = 0`` on bounded
domains, builds and checks barrier and super-solution families, and brackets
solutions on unbounded cylinder- and cone-contained domains.
"""

__version__ = "0.1.0"
