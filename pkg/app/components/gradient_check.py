# coding:utf-8
from typing import Callable

import numpy as np


def numerical_gradient(f: Callable[[np.ndarray], float], theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """ central finite differences of a scalar function of a flat vector """
    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + step
        up = f(theta)
        theta[i] = orig - step
        down = f(theta)
        theta[i] = orig
        grad[i] = (up - down) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """ ||a - n|| / (||a|| + ||n||), 0 when both gradients vanish """
    analytic = np.ravel(np.asarray(analytic, dtype=np.float64))
    numeric = np.ravel(np.asarray(numeric, dtype=np.float64))
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom < floor:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)
