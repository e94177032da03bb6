__version__ = '1.0.0dev0'

from .gaussq import GaussianPosterior, ValueBounds
from .envs import make_env
from .agents import make_agent, train_epoch
