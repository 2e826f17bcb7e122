import logging

logger = logging.getLogger("pyhawkesnet")

handler = logging.StreamHandler()
formatter = logging.Formatter("[%(name)s]:[%(levelname)s]: %(message)s")
handler.setFormatter(formatter)

logger.addHandler(handler)
logger.setLevel(logging.WARNING)
logger.propagate = False

from .errors import HawkesNetError  # noqa: E402
from .graph import InteractionGraph, graph_limits, sample_graph  # noqa: E402
from .harness import ExperimentConfig, MCReport, Target, run_experiment  # noqa: E402
from .kernel import KernelSpec, RegimeParams  # noqa: E402
from .simulator import EventLog, expected_counts, simulate  # noqa: E402
from .subcritical import SubcriticalEstimate, estimate  # noqa: E402
from .supercritical import SupercriticalEstimate, estimate_super  # noqa: E402
from .version import __version__  # noqa: E402

__all__ = [
    "EventLog",
    "ExperimentConfig",
    "HawkesNetError",
    "InteractionGraph",
    "KernelSpec",
    "MCReport",
    "RegimeParams",
    "SubcriticalEstimate",
    "SupercriticalEstimate",
    "Target",
    "__version__",
    "estimate",
    "estimate_super",
    "expected_counts",
    "graph_limits",
    "run_experiment",
    "sample_graph",
    "simulate",
]
