"""Multi-vocabulary bag-of-words retrieval with Bayes merging."""

from ._vmerge import *  # noqa: F401,F403
from ._vmerge import __version__  # noqa: F401
