"""Sequential strategies trained against exact Bayesian references."""

try:
    from ._metastrat import *  # noqa: F401,F403
    from ._metastrat import __version__  # noqa: F401
except ImportError:
    # build-tree layout: the extension sits on sys.path next to the package
    from _metastrat import *  # noqa: F401,F403
    from _metastrat import __version__  # noqa: F401
