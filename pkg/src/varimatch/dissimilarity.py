"""Varifold matching terms between atom sets and their vertex gradients.

Writing ``K[i, j]`` for the product kernel between atoms i and j and ``w``
for weights, the local mass of a shape seen from a query atom is
``omega(i) = sum_j w_j K[i, j]`` (the query's own atom included). The four
dissimilarities between a source S and target T are

* ``varifold_distance``: <S,S> - 2<S,T> + <T,T> with
  ``<A,B> = sum_ij w_i^A w_j^B K[i, j]``, the squared kernel distance;
* ``naive_half``: <S,S> - <S,T>, a signed diagnostic that lets a local
  mismatch be compensated by excess overlap elsewhere;
* ``partial``: ``sum_i w_i g(omega_S(i) - omega_T(i))`` with
  ``g(s) = max(0, s)^2``, penalizing only source mass not covered by the
  target;
* ``partial_normalized``: as ``partial`` but the target coverage of atom i
  is capped by the local mass ratio,
  ``sum_l w_l^T min_eps(1, omega_S(i)/omega_T(l)) K[i, l]``, so that a
  mass-rich target does not over-cover and a mass-rich source still pays.

Gradients with respect to source vertex positions are closed forms chained
through atom centers, unit directions and length/area weights; the target is
constant. Sums run in atom-index order through numpy reductions, so results
are deterministic for a given input ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Atoms, DiscreteShape, Polylines, ShapeError
from .kernels import ConfigError, VarifoldKernelConfig, atom_gram

VARIANTS = ("varifold_distance", "naive_half", "partial", "partial_normalized")


@dataclass(frozen=True)
class MatchingConfig:
    """Kernel scale plus the smoothing constant of the normalized variant."""

    kernel: VarifoldKernelConfig
    epsilon: float = 1e-3

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ConfigError("epsilon must be positive")


def _require(atoms: Atoms, name: str):
    if len(atoms) == 0:
        raise ShapeError(f"{name} shape has no atoms")


def local_mass(query: Atoms, shape: Atoms, cfg: MatchingConfig) -> np.ndarray:
    """Kernel-weighted mass of ``shape`` seen from each query atom."""
    _require(shape, "evaluated")
    return atom_gram(query, shape, cfg.kernel) @ shape.weights


def varifold_inner(a: Atoms, b: Atoms, cfg: MatchingConfig) -> float:
    """Kernel inner product between two atom sets."""
    _require(a, "first")
    _require(b, "second")
    return float(a.weights @ atom_gram(a, b, cfg.kernel) @ b.weights)


def varifold_distance_sq(source: Atoms, target: Atoms, cfg: MatchingConfig) -> float:
    ss = varifold_inner(source, source, cfg)
    tt = varifold_inner(target, target, cfg)
    st = varifold_inner(source, target, cfg)
    value = ss - 2.0 * st + tt
    if -1e-9 * (ss + tt) < value < 0.0:
        value = 0.0
    return value


def naive_half(source: Atoms, target: Atoms, cfg: MatchingConfig) -> float:
    """Signed half expression <S,S> - <S,T>; may be negative."""
    return varifold_inner(source, source, cfg) - varifold_inner(source, target, cfg)


def _g(s: np.ndarray) -> np.ndarray:
    return np.square(np.maximum(0.0, s))


def _g_prime(s: np.ndarray) -> np.ndarray:
    return 2.0 * np.maximum(0.0, s)


def partial_dissimilarity(source: Atoms, target: Atoms, cfg: MatchingConfig) -> float:
    _require(source, "source")
    _require(target, "target")
    omega_s = local_mass(source, source, cfg)
    omega_t = local_mass(source, target, cfg)
    return float(source.weights @ _g(omega_s - omega_t))


def smooth_min_one(s, epsilon: float):
    """Smooth approximation of min(1, s): (s + 1 - sqrt(eps + (s-1)^2)) / 2."""
    s = np.asarray(s, dtype=float)
    out = 0.5 * (s + 1.0 - np.sqrt(epsilon + (s - 1.0) ** 2))
    return float(out) if out.ndim == 0 else out


def _smooth_min_one_prime(s: np.ndarray, epsilon: float) -> np.ndarray:
    return 0.5 * (1.0 - (s - 1.0) / np.sqrt(epsilon + (s - 1.0) ** 2))


def partial_normalized_dissimilarity(
    source: Atoms, target: Atoms, cfg: MatchingConfig
) -> float:
    _require(source, "source")
    _require(target, "target")
    k_st = atom_gram(source, target, cfg.kernel)
    omega_s = atom_gram(source, source, cfg.kernel) @ source.weights
    omega_t_at_t = atom_gram(target, target, cfg.kernel) @ target.weights
    ratio = omega_s[:, None] / omega_t_at_t[None, :]
    capped = smooth_min_one(ratio, cfg.epsilon)
    coverage = (capped * k_st) @ target.weights
    return float(source.weights @ _g(omega_s - coverage))


_VALUES = {
    "varifold_distance": varifold_distance_sq,
    "naive_half": naive_half,
    "partial": partial_dissimilarity,
    "partial_normalized": partial_normalized_dissimilarity,
}


def dissimilarity_value(
    variant: str, source: Atoms, target: Atoms, cfg: MatchingConfig
) -> float:
    try:
        fn = _VALUES[variant]
    except KeyError:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}") from None
    return fn(source, target, cfg)


def _atom_gradients(variant, source: Atoms, target: Atoms, cfg: MatchingConfig):
    """Value and gradients w.r.t. source atom centers, directions, weights.

    All four variants share one chain structure: a per-atom coefficient ``a``
    weighting derivatives flowing through the source-source kernel, a matrix
    ``beta`` weighting derivatives of the source-target kernel, and a direct
    weight-channel term ``gw``.
    """
    _require(source, "source")
    _require(target, "target")
    w_s, w_t = source.weights, target.weights
    c_s, c_t = source.positions, target.positions
    u_s, u_t = source.directions, target.directions
    k_ss = atom_gram(source, source, cfg.kernel)
    k_st = atom_gram(source, target, cfg.kernel)
    omega_s = k_ss @ w_s
    omega_t = k_st @ w_t

    if variant == "varifold_distance":
        ss = float(w_s @ omega_s)
        tt = varifold_inner(target, target, cfg)
        value = ss - 2.0 * float(w_s @ omega_t) + tt
        if -1e-9 * (ss + tt) < value < 0.0:
            value = 0.0
        a = w_s
        beta = 2.0 * np.outer(w_s, w_t)
        gw = 2.0 * (omega_s - omega_t)
    elif variant == "naive_half":
        value = float(w_s @ (omega_s - omega_t))
        a = w_s
        beta = np.outer(w_s, w_t)
        gw = 2.0 * omega_s - omega_t
    elif variant == "partial":
        r = omega_s - omega_t
        value = float(w_s @ _g(r))
        a = w_s * _g_prime(r)
        beta = np.outer(a, w_t)
        gw = _g(r) + k_ss @ a
    elif variant == "partial_normalized":
        omega_t_at_t = atom_gram(target, target, cfg.kernel) @ w_t
        ratio = omega_s[:, None] / omega_t_at_t[None, :]
        capped = smooth_min_one(ratio, cfg.epsilon)
        f = omega_s - (capped * k_st) @ w_t
        value = float(w_s @ _g(f))
        slope = _smooth_min_one_prime(ratio, cfg.epsilon)
        # sensitivity of f_i to omega_s(i), through every capped ratio
        b = 1.0 - ((slope / omega_t_at_t[None, :]) * k_st) @ w_t
        a_bar = w_s * _g_prime(f)
        a = a_bar * b
        beta = a_bar[:, None] * (capped * w_t[None, :])
        gw = _g(f) + k_ss @ a
    else:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")

    coef = -2.0 / cfg.kernel.sigma_w**2
    gc = np.empty_like(c_s)
    for d in range(3):
        p_ss = k_ss * (c_s[:, None, d] - c_s[None, :, d])
        p_st = k_st * (c_s[:, None, d] - c_t[None, :, d])
        gc[:, d] = coef * (a * (p_ss @ w_s) + w_s * (p_ss @ a) - (beta * p_st).sum(axis=1))
    gu = (
        a[:, None] * (k_ss @ (w_s[:, None] * u_s))
        + w_s[:, None] * (k_ss @ (a[:, None] * u_s))
        - (beta * k_st) @ u_t
    )
    return value, gc, gu, gw


def _chain_to_vertices(shape: DiscreteShape, gc, gu, gw) -> np.ndarray:
    """Accumulate atom-level gradients onto the vertices that define them."""
    geom = shape.geometry
    atoms = shape.atoms
    u = atoms.directions
    grad = np.zeros_like(geom.vertices)
    radial = np.einsum("ij,ij->i", gu, u)
    tangential = gu - radial[:, None] * u
    if isinstance(geom, Polylines):
        e = geom.edges
        lengths = atoms.weights
        half_gc = 0.5 * gc
        g_edge = tangential / lengths[:, None] + gw[:, None] * u
        np.add.at(grad, e[:, 0], half_gc - g_edge)
        np.add.at(grad, e[:, 1], half_gc + g_edge)
    else:
        f = geom.faces
        v = geom.vertices
        va, vb, vc = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        raw_norm = 2.0 * atoms.weights
        g_raw = tangential / raw_norm[:, None] + 0.5 * gw[:, None] * u
        third_gc = gc / 3.0
        np.add.at(grad, f[:, 0], third_gc + np.cross(g_raw, vc - vb))
        np.add.at(grad, f[:, 1], third_gc + np.cross(g_raw, va - vc))
        np.add.at(grad, f[:, 2], third_gc + np.cross(g_raw, vb - va))
    return grad


def dissimilarity_with_vertex_gradient(
    variant: str, source: DiscreteShape, target: DiscreteShape, cfg: MatchingConfig
):
    """Value and exact gradient with respect to every source vertex."""
    value, gc, gu, gw = _atom_gradients(variant, source.atoms, target.atoms, cfg)
    return value, _chain_to_vertices(source, gc, gu, gw)


def source_vertex_gradient(
    variant: str, source: DiscreteShape, target: DiscreteShape, cfg: MatchingConfig
) -> np.ndarray:
    return dissimilarity_with_vertex_gradient(variant, source, target, cfg)[1]
