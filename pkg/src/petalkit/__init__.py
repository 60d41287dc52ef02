"""petalkit: numerics for parabolic germs.

Petal geometry, half-plane models, Fatou linearization, holomorphic-motion
checks, Beltrami/dilatation estimation, near-conformal conjugacies between
topologically conjugate germs, and quasiconformal gluing of germ families.
"""

__version__ = "0.1.0"

from . import errors, germ, petal  # noqa: F401
