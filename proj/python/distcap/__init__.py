from ._distcap import *  # noqa: F401,F403
from ._distcap import __doc__  # noqa: F401
