"""Anisotropic convex geometry on support functions: Wulff shapes, mixed
volumes, curvature measures and a volume-preserving anisotropic flow."""

from .anisotropy import *  # noqa: F401,F403
from .bodies import *  # noqa: F401,F403
from .curvature import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .flow import *  # noqa: F401,F403
from .harness import *  # noqa: F401,F403
from .measures import *  # noqa: F401,F403
from .sphere import SphereGrid, make_grid  # noqa: F401

__version__ = "0.1.0"
