"""Kernel evaluations shared by the matching and deformation code.

Two kernels act on atoms: a Gaussian on positions with scale ``sigma_w`` and
an oriented exponential kernel ``exp(<u, v>)`` on unit directions; their
product scores a pair of atoms. The deformation kernel is a sum of Gaussians
at scales ``sigma0 / s`` for each divisor ``s`` and parameterizes velocity
fields. All pairwise (Gram) forms are plain dense arrays; problems stay small
enough that exact O(n^2) sums are the right tool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Invalid kernel or registration hyperparameters."""


@dataclass(frozen=True)
class VarifoldKernelConfig:
    """Scale of the spatial Gaussian used by the matching term."""

    sigma_w: float

    def __post_init__(self):
        if not (self.sigma_w > 0):
            raise ConfigError("sigma_w must be positive")


@dataclass(frozen=True)
class DeformationKernelConfig:
    """Base scale and scale divisors of the multi-scale velocity kernel."""

    sigma0: float
    scales: tuple = (1.0, 4.0, 8.0, 16.0)

    def __post_init__(self):
        if not (self.sigma0 > 0):
            raise ConfigError("sigma0 must be positive")
        scales = tuple(float(s) for s in self.scales)
        if not scales or any(s <= 0 for s in scales):
            raise ConfigError("scales must be a non-empty list of positive numbers")
        object.__setattr__(self, "scales", scales)


def spatial_kernel(x, y, cfg: VarifoldKernelConfig) -> float:
    """Gaussian kernel exp(-|x - y|^2 / sigma_w^2) between two points."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-(d @ d) / cfg.sigma_w**2))


def _check_unit(u: np.ndarray, name: str):
    err = abs(float(u @ u) - 1.0)
    if err > 2e-9:  # tolerance on |u|^2, ~1e-9 on |u|
        raise ValueError(f"{name} must be a unit vector (|u|^2 off by {err:.2e})")


def direction_kernel(u, v) -> float:
    """Oriented kernel exp(<u, v>) between two unit vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_unit(u, "u")
    _check_unit(v, "v")
    return float(np.exp(u @ v))


def atom_kernel(a, b, cfg: VarifoldKernelConfig) -> float:
    """Product kernel between two atoms (position and direction parts)."""
    return spatial_kernel(a.position, b.position, cfg) * direction_kernel(
        a.direction, b.direction
    )


def deformation_kernel(x, y, cfg: DeformationKernelConfig) -> float:
    """Multi-scale Gaussian sum between two points."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r2 = float(d @ d)
    return float(sum(np.exp(-r2 / (cfg.sigma0 / s) ** 2) for s in cfg.scales))


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Expanded per-coordinate so transposing arguments gives the bitwise
    # transpose (needed for exact kernel symmetry).
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def spatial_gram(x: np.ndarray, y: np.ndarray, cfg: VarifoldKernelConfig) -> np.ndarray:
    """(n, m) matrix of spatial kernel values between two point sets."""
    return np.exp(-_sq_dists(x, y) / cfg.sigma_w**2)


def direction_gram(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(n, m) matrix of oriented kernel values between unit vector sets."""
    return np.exp(u @ v.T)


def atom_gram(a, b, cfg: VarifoldKernelConfig) -> np.ndarray:
    """(n, m) matrix of product kernel values between two atom sets."""
    return spatial_gram(a.positions, b.positions, cfg) * direction_gram(
        a.directions, b.directions
    )


def deformation_gram(x: np.ndarray, y: np.ndarray, cfg: DeformationKernelConfig) -> np.ndarray:
    """(n, m) matrix of multi-scale kernel values between point sets."""
    r2 = _sq_dists(x, y)
    out = np.zeros_like(r2)
    for s in cfg.scales:
        out += np.exp(-r2 / (cfg.sigma0 / s) ** 2)
    return out
