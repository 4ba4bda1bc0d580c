"""The two benchmark systems used in the experiments.

The process-noise covariance is not given for either system. Both default to
``0.1 I``: with ``D0 = I`` the early critic transient of the two-timescale
actor-critic (critic initialised at zero) pushes Example 1, whose open loop
has eigenvalues +-1, out of the stabilizing set on roughly one seed in five,
even from ``K0 = K*``. At ``0.1 I`` none of the seeds we tried did.
"""
import numpy as np

from .oracle import LqrProblem

DEFAULT_NOISE_SCALE = 0.1


def example_1(sigma=1.0, D0=None):
    """Two-dimensional system (d = k = 2)."""
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    Q = np.array([[9.0, 2.0], [2.0, 1.0]])
    R = np.array([[1.0, 2.0], [2.0, 8.0]])
    return LqrProblem(A, B, Q, R, DEFAULT_NOISE_SCALE * np.eye(2) if D0 is None else D0, sigma, name="example1")


def example_2(sigma=1.0, D0=None):
    """Four states, three inputs."""
    A = np.array([
        [0.2, 0.1, 1.0, 0.0],
        [0.2, 0.1, 0.1, 0.0],
        [0.0, 0.1, 0.5, 0.0],
        [0.0, 0.0, 0.0, 0.5],
    ])
    B = np.array([
        [0.3, 0.0, 0.0],
        [0.2, 0.0, 0.3],
        [1.0, 1.0, 0.3],
        [0.3, 0.1, 0.1],
    ])
    Q = np.array([
        [1.0, 0.0, 0.2, 0.0],
        [0.0, 1.0, 0.1, 0.0],
        [0.2, 0.1, 1.0, 0.1],
        [0.0, 0.0, 0.1, 1.0],
    ])
    R = np.array([[1.0, 0.1, 1.0], [0.1, 1.0, 0.5], [1.0, 0.5, 2.0]])
    return LqrProblem(A, B, Q, R, DEFAULT_NOISE_SCALE * np.eye(4) if D0 is None else D0, sigma, name="example2")


EXAMPLES = {"example1": example_1, "example2": example_2}
