"""Numerical laboratory for partially hyperbolic endomorphisms of the 2-torus.

Builds the linear Anosov models, the Mane-type sc-DA map and its non-special
perturbation, a dual cu-DA model and a conservative T^3 example, then verifies
cone-field partial hyperbolicity, specialness, the semi-conjugacy to the
linearization, the structure of the injectivity set and Lyapunov-exponent
rigidity at periodic points.
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
