# coding:utf-8
from typing import Tuple, Union

import numpy as np

from ..common.exception_handler import ContractViolation
from ..common.setting import LOG_CLAMP_EPS
from .latent_gaussian import LatentGaussian


Real = Union[float, np.ndarray]


def _scalarIfVector(values: np.ndarray, ndim: int) -> Real:
    return float(values) if ndim == 1 else values


def kl_diag_gaussian(g: LatentGaussian) -> Real:
    """
    KL(N(mean, diag(exp(log_variance))) || N(0, I)); one value per row for batches
    """
    if not g.isFinite():
        raise ContractViolation("latent Gaussian has non-finite entries")

    terms = g.mean ** 2 + np.exp(g.log_variance) - 1.0 - g.log_variance
    return _scalarIfVector(0.5 * terms.sum(axis=-1), g.mean.ndim)


def kl_diag_gaussian_grad(g: LatentGaussian) -> Tuple[np.ndarray, np.ndarray]:
    """ (d/dmean, d/dlog_variance) of the per-row KL """
    return g.mean.copy(), 0.5 * np.expm1(g.log_variance)


def _checkPair(reconstruction, target) -> Tuple[np.ndarray, np.ndarray]:
    r = np.asarray(reconstruction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if r.shape != t.shape:
        raise ContractViolation(f"reconstruction shape {r.shape} differs from target shape {t.shape}")
    if not np.isfinite(r).all() or ((t < 0) | (t > 1)).any() or not np.isfinite(t).all():
        raise ContractViolation("BCE targets must lie in [0, 1]")
    return r, t


def bce_reconstruction(reconstruction, target) -> Real:
    """ -sum t log r + (1 - t) log(1 - r), r clamped to [eps, 1 - eps] """
    r, t = _checkPair(reconstruction, target)
    rc = np.clip(r, LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS)
    values = -(t * np.log(rc) + (1.0 - t) * np.log1p(-rc)).sum(axis=-1)
    return _scalarIfVector(values, r.ndim)


def bce_reconstruction_grad(reconstruction, target) -> np.ndarray:
    """ derivative w.r.t. the reconstruction; zero where the clamp is active """
    r, t = _checkPair(reconstruction, target)
    inside = (r > LOG_CLAMP_EPS) & (r < 1.0 - LOG_CLAMP_EPS)
    rc = np.clip(r, LOG_CLAMP_EPS, 1.0 - LOG_CLAMP_EPS)
    return np.where(inside, (rc - t) / (rc * (1.0 - rc)), 0.0)


def _checkProbabilities(probabilities, label) -> Tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(label)
    if p.ndim == 1:
        p2, y1 = p[None, :], y.reshape(1)
    else:
        p2, y1 = p, y.reshape(-1)

    if y1.shape[0] != p2.shape[0]:
        raise ContractViolation(f"{y1.shape[0]} labels for {p2.shape[0]} probability rows")
    if not np.issubdtype(y1.dtype, np.integer):
        if not np.all(np.mod(y1, 1) == 0):
            raise ContractViolation("class labels must be integers")
        y1 = y1.astype(np.int64)
    if ((y1 < 0) | (y1 >= p2.shape[1])).any():
        raise ContractViolation(f"label out of range for {p2.shape[1]} classes")
    if (np.abs(p2.sum(axis=1) - 1.0) > 1e-6).any():
        raise ContractViolation("probabilities must sum to 1")
    return p2, y1


def cross_entropy(probabilities, label) -> Real:
    """ -log p[label], p clamped to >= eps """
    p2, y1 = _checkProbabilities(probabilities, label)
    picked = np.maximum(p2[np.arange(len(y1)), y1], LOG_CLAMP_EPS)
    return _scalarIfVector(-np.log(picked), np.ndim(probabilities))


def cross_entropy_grad(probabilities, label) -> np.ndarray:
    """ derivative w.r.t. the probability vector; zero where the clamp is active """
    p2, y1 = _checkProbabilities(probabilities, label)
    rows = np.arange(len(y1))
    picked = p2[rows, y1]
    grad = np.zeros_like(p2)
    grad[rows, y1] = np.where(picked > LOG_CLAMP_EPS, -1.0 / np.maximum(picked, LOG_CLAMP_EPS), 0.0)
    return grad[0] if np.ndim(probabilities) == 1 else grad
