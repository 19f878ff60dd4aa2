from ._towerlab import *  # noqa: F401,F403
