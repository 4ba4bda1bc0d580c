"""Actor-critic methods for the noisy linear quadratic regulator."""
from .algos import (
    Projection,
    Schedules,
    double_loop_nac,
    natural_gradient_estimate,
    two_timescale_nac,
    uniform_frobenius_sphere,
    zeroth_order_npg,
)
from .env import SamplingMode, make_rng
from .errors import ConfigError, ConvergenceError, InstabilityError, NumericalError
from .oracle import LqrProblem, evaluate_policy
from .problems import example_1, example_2
from .records import RunRecord, aggregate

__version__ = "0.1.0"
