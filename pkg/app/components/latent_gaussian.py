# coding:utf-8
from dataclasses import dataclass

import numpy as np

from ..common.exception_handler import ContractViolation


@dataclass(frozen=True, eq=False)
class LatentGaussian:
    """
    Diagonal Gaussian q(z | .) given by its mean and log-variance.

    Both fields are vectors `[latent_dim]` or batches `[n, latent_dim]`.
    """

    mean: np.ndarray
    log_variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        logVar = np.asarray(self.log_variance, dtype=np.float64)
        if mean.shape != logVar.shape:
            raise ContractViolation(
                f"mean shape {mean.shape} differs from log-variance shape {logVar.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_variance", logVar)

    @property
    def latent_dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def std(self) -> np.ndarray:
        return np.exp(0.5 * self.log_variance)

    def isFinite(self) -> bool:
        return bool(np.isfinite(self.mean).all() and np.isfinite(self.log_variance).all())


def reparameterize(g: LatentGaussian, noise) -> np.ndarray:
    """ z = mean + exp(log_variance / 2) * noise """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != g.mean.shape:
        raise ContractViolation(f"noise shape {noise.shape} does not match latent shape {g.mean.shape}")
    return g.mean + g.std * noise


def reparameterize_backward(g: LatentGaussian, noise: np.ndarray, dz: np.ndarray):
    """ gradients of z w.r.t. (mean, log_variance), given upstream `dz` """
    return dz, dz * noise * 0.5 * g.std
