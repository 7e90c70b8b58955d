"""Light ray transforms on Minkowski space and product Lorentzian manifolds."""
import os

# the TBB layer in common wheels is too old and only produces a warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
