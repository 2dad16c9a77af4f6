"""Simulation lab for the multiplicative-noise wealth exchange model on networks.

Modules: ``network`` (exchange graphs), ``sde`` (Milstein Monte-Carlo),
``stats`` (ensemble estimators), ``moments`` (exact moment ODEs),
``meanfield`` (inverse-gamma law), ``regimes`` (transition times) and
``cli`` (command-line front end).
"""

import warnings

# numba probes for TBB at import and warns when the installed version is too old;
# the workqueue/omp layers are used instead, so the warning is noise
warnings.filterwarnings("ignore", message=".*TBB.*", category=Warning)

try:
    from importlib.metadata import PackageNotFoundError, version

    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .exceptions import WealthLabError  # noqa: E402

__all__ = ["WealthLabError", "__version__"]
