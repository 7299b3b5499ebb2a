"""Sub-supersolution and monotone-iteration solver for nonlocal Phi-Laplacian problems.

Typical use::

    from phinonlocal import power_law, make_mesh, ProblemSpec
    from phinonlocal import build_pair_sublinear, iterate_scalar

    nf = power_law(2.0)
    spec = ProblemSpec.scalar(nf, alpha=0.3, beta=0.3)
    mesh = make_mesh(1, [(0.0, 1.0)], [801])
    pair = build_pair_sublinear(spec, mesh)
    trace = iterate_scalar(spec, pair)
"""

from .errors import *  # noqa: F401,F403
from .grid import *  # noqa: F401,F403
from .monotone import *  # noqa: F401,F403
from .nfunction import *  # noqa: F401,F403
from .orlicz import *  # noqa: F401,F403
from .philap import *  # noqa: F401,F403
from .problem import *  # noqa: F401,F403
from .subsuper import *  # noqa: F401,F403
from .config import Scenario, load_scenario, parse_scenario

__version__ = "0.1.0"
