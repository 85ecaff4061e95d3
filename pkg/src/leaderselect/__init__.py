"""Leader selection for leader-follower consensus networks.

Followers average their neighbours' states, leaders hold fixed anchors.
Leaders are chosen to minimise an initial-state-free bound on how far the
followers are from the leaders' hull after a horizon ``t``; the bound is
supermodular, so greedy selection carries approximation guarantees.  For
switching topologies an experts-based online selector is included.
"""

from .dynamics import *  # noqa: F401,F403
from .dynamics import __all__ as _dyn
from .experiments import ExperimentConfig, ConfigError, run_experiment, summarize, validate_config
from .graph import *  # noqa: F401,F403
from .graph import __all__ as _graph
from .online import *  # noqa: F401,F403
from .online import __all__ as _online
from .selection import *  # noqa: F401,F403
from .selection import __all__ as _sel
from .walk_oracle import *  # noqa: F401,F403
from .walk_oracle import __all__ as _walk

__version__ = "0.1.0"

__all__ = (
    _graph
    + _dyn
    + _sel
    + _online
    + _walk
    + ["ExperimentConfig", "ConfigError", "run_experiment", "summarize", "validate_config"]
)
