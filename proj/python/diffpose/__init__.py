"""Video pose estimation via conditional heatmap diffusion."""

from ._diffpose import *  # noqa: F401,F403
from ._diffpose import __version__  # noqa: F401
