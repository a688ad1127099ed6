"""von Mises-Fisher sampling via Wood's (1994) rejection algorithm.

Used by the bag-of-words baseline encoder, whose posterior is a vMF
perturbation of the deterministic edit vector.  Only sampling is needed
(no density evaluation), and the weight samples do not depend on the mean
direction, which is what lets gradients flow through the direction vector
during training.
"""

from __future__ import annotations

import numpy as np


def sample_weight(rng: np.random.Generator, kappa: float, dim: int) -> float:
    """Sample the cosine w of the angle between the draw and the mean
    direction, for vMF(mu, kappa) on the (dim-1)-sphere in R^dim."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if dim < 2:
        raise ValueError("need dim >= 2")
    b = (-2.0 * kappa + np.sqrt(4.0 * kappa ** 2 + (dim - 1) ** 2)) / (dim - 1)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + (dim - 1) * np.log(1.0 - x0 ** 2)
    while True:
        z = rng.beta((dim - 1) / 2.0, (dim - 1) / 2.0)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(0.0, 1.0)
        if kappa * w + (dim - 1) * np.log(1.0 - x0 * w) - c >= np.log(u):
            return float(w)


def orthonormal_to(rng: np.random.Generator, mu: np.ndarray) -> np.ndarray:
    """A uniformly random unit vector orthogonal to mu."""
    v = rng.standard_normal(mu.shape[0])
    v = v - mu * np.dot(mu, v)
    norm = np.linalg.norm(v)
    if norm < 1e-12:  # astronomically unlikely; retry once
        return orthonormal_to(rng, mu)
    return v / norm


def sample_vmf(rng: np.random.Generator, mu: np.ndarray, kappa: float) -> np.ndarray:
    """One draw from vMF(mu, kappa); mu must be unit-norm."""
    mu = np.asarray(mu, dtype=np.float64)
    if abs(np.linalg.norm(mu) - 1.0) > 1e-6:
        raise ValueError("mu must be unit-norm")
    w = sample_weight(rng, kappa, mu.shape[0])
    v = orthonormal_to(rng, mu)
    return v * np.sqrt(max(0.0, 1.0 - w * w)) + mu * w
