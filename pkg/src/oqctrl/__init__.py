"""Toolkit for simulating and optimizing open quantum systems driven by
coherent and incoherent controls.

Subpackages:

* ``core`` -- density matrices, Bloch vectors, Kraus maps, validation
* ``lindblad`` -- GKSL generators and piecewise-constant propagation
* ``stiefel`` -- channel optimization over complex Stiefel manifolds
* ``ingrape`` -- gradient pulse optimization with incoherent controls
* ``kraussearch`` -- bounded exact-arithmetic channel-sequence search
* ``reachable`` -- Monte-Carlo exploration of the qubit reachable set
"""

__version__ = "0.1.0"

from . import core, ingrape, kraussearch, lindblad, reachable, stiefel

__all__ = [
    "core",
    "lindblad",
    "stiefel",
    "ingrape",
    "kraussearch",
    "reachable",
    "__version__",
]
