"""edgeflat: numerics for Kahler metrics with cone (edge) singularities.

The package studies metrics of cone angle 2*pi*beta, beta in (0, 1/2),
along a divisor.  It provides

* cone-adapted grids and the straightened coordinate xi = |zeta|^(beta-1)*zeta,
* the model cone Laplacian and a mode-decomposed Poisson solver,
* singular background metrics (sphere with marked points, cone disk x torus),
* a continuity-method solver for the complex Monge-Ampere equation,
* a verification suite for the a-priori estimates (decay fits, barrier,
  Laplacian/third-order bounds, Sobolev ratio, curvature checks),
* a CLI (``edgeflat``) producing deterministic manifests.
"""

from .params import ConeParams
from .grid import ConeGrid
from .fields import Field, MetricField
from .fits import DecayFit

__version__ = "0.1.0"

__all__ = [
    "ConeParams",
    "ConeGrid",
    "Field",
    "MetricField",
    "DecayFit",
    "__version__",
]
