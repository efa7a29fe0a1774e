"""Large-deformation engine: Hamiltonian particle shooting and its adjoint.

Velocity fields are parameterized by momenta at control points through the
multi-scale kernel, ``v(x) = sum_j K(x, q_j) p_j``. Geodesics follow the
point-particle Hamiltonian ``H(q, p) = 1/2 sum_ij K(q_i, q_j) <p_i, p_j>``
integrated with RK4 over uniform steps on [0, 1]. Control points are the
source shape vertices, so the deformed shape is read directly off the
trajectory endpoint and its atoms are re-derived from the moved vertices.

The registration objective is ``2 * lam * H(q0, p0) + D(deformed S, T)``
(the kinetic energy of a geodesic equals ``2 H(q0, p0)``). Its gradient with
respect to the initial momenta reverse-propagates the vertex gradient of the
dissimilarity through every RK4 stage, so it is the exact gradient of the
discrete objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dissimilarity import (
    MatchingConfig,
    dissimilarity_value,
    dissimilarity_with_vertex_gradient,
)
from .geometry import DiscreteShape
from .kernels import ConfigError, DeformationKernelConfig, deformation_gram


class IntegrationError(RuntimeError):
    """Non-finite state encountered while integrating the flow."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state at integration step {step}")
        self.step = step


@dataclass(frozen=True)
class ShootingConfig:
    """Deformation kernel plus the number of uniform RK4 steps on [0, 1]."""

    kernel: DeformationKernelConfig
    time_steps: int = 10

    def __post_init__(self):
        if self.time_steps < 1:
            raise ConfigError("time_steps must be at least 1")


@dataclass(frozen=True)
class Trajectory:
    """Control point positions and momenta at every time step, t = 0..T."""

    positions: np.ndarray
    momenta: np.ndarray

    @property
    def steps(self) -> int:
        return self.positions.shape[0] - 1


def velocity_at(points, q, p, cfg: DeformationKernelConfig) -> np.ndarray:
    """Velocity field induced by momenta ``p`` at control points ``q``."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"control point/momenta shape mismatch: {q.shape} vs {p.shape}")
    return deformation_gram(np.asarray(points, dtype=float), q, cfg) @ p


def hamiltonian(q, p, cfg: DeformationKernelConfig) -> float:
    """Kinetic energy 1/2 sum_ij K(q_i, q_j) <p_i, p_j> of a particle state."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise ValueError(f"control point/momenta shape mismatch: {q.shape} vs {p.shape}")
    return 0.5 * float(np.sum(deformation_gram(q, q, cfg) * (p @ p.T)))


def _sq_dists(x, y):
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _interaction_grams(q, cfg: DeformationKernelConfig, order: int):
    """Kernel matrix and its first/second radial derivative factors.

    Returns (K, c) or (K, c, d) where grad_1 K = -c * (q_i - q_j) and
    grad_1 c = -d * (q_i - q_j).
    """
    r2 = _sq_dists(q, q)
    k = np.zeros_like(r2)
    c = np.zeros_like(r2)
    d = np.zeros_like(r2) if order >= 2 else None
    for s in cfg.scales:
        sig2 = (cfg.sigma0 / s) ** 2
        e = np.exp(-r2 / sig2)
        k += e
        c += (2.0 / sig2) * e
        if order >= 2:
            d += (4.0 / sig2**2) * e
    return (k, c) if order < 2 else (k, c, d)


def _pairwise_diff_sum(w, x):
    # sum_j w[i, j] * (x_i - x_j)
    return x * w.sum(axis=1)[:, None] - w @ x


def _rhs(q, p, x, cfg: DeformationKernelConfig):
    """Hamiltonian vector field, plus advection of passive points ``x``."""
    dq = deformation_gram(q, q, cfg) @ p
    _, c = _interaction_grams(q, cfg, order=1)
    dp = _pairwise_diff_sum(c * (p @ p.T), q)
    dx = None if x is None else deformation_gram(x, q, cfg) @ p
    return dq, dp, dx


def _rhs_vjp(q, p, aq, ap, cfg: DeformationKernelConfig):
    """Transpose-Jacobian product of the Hamiltonian field at (q, p)."""
    k, c, d = _interaction_grams(q, cfg, order=2)
    pp = p @ p.T
    qa = q @ ap.T
    diag = np.einsum("ij,ij->i", q, ap)
    dd = diag[:, None] + diag[None, :] - qa - qa.T  # <q_i - q_j, ap_i - ap_j>
    s = aq @ p.T
    s = s + s.T  # <aq_i, p_j> + <aq_j, p_i>
    gp = k @ aq + (c * dd) @ p
    gq = (
        -_pairwise_diff_sum(c * s, q)
        + _pairwise_diff_sum(c * pp, ap)
        - _pairwise_diff_sum(d * dd * pp, q)
    )
    return gq, gp


def _rk4_step(q, p, x, dt, cfg):
    k1 = _rhs(q, p, x, cfg)
    k2 = _rhs(q + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1],
              None if x is None else x + 0.5 * dt * k1[2], cfg)
    k3 = _rhs(q + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1],
              None if x is None else x + 0.5 * dt * k2[2], cfg)
    k4 = _rhs(q + dt * k3[0], p + dt * k3[1],
              None if x is None else x + dt * k3[2], cfg)
    sixth = dt / 6.0
    q1 = q + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    p1 = p + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    x1 = None if x is None else x + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return q1, p1, x1, (k1, k2, k3)


def _integrate(q0, p0, x0, time_steps, dt, cfg, keep_stages=False):
    q, p, x = q0, p0, x0
    qs, ps = [q], [p]
    stages = [] if keep_stages else None
    for step in range(time_steps):
        q, p, x, ks = _rk4_step(q, p, x, dt, cfg)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))
                and (x is None or np.all(np.isfinite(x)))):
            raise IntegrationError(step)
        qs.append(q)
        ps.append(p)
        if keep_stages:
            stages.append(ks)
    return np.array(qs), np.array(ps), x, stages


def shoot(q0, p0, cfg: ShootingConfig) -> Trajectory:
    """Integrate the geodesic equations from initial momenta."""
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if q0.shape != p0.shape:
        raise ValueError(f"control point/momenta shape mismatch: {q0.shape} vs {p0.shape}")
    if not (np.all(np.isfinite(q0)) and np.all(np.isfinite(p0))):
        raise ValueError("non-finite initial state")
    qs, ps, _, _ = _integrate(q0, p0, None, cfg.time_steps, 1.0 / cfg.time_steps, cfg.kernel)
    return Trajectory(qs, ps)


def flow_points(extra, trajectory: Trajectory, cfg: ShootingConfig, reverse=False) -> np.ndarray:
    """Advect passive points through the trajectory's velocity field.

    Forward advection re-integrates the control points jointly with the extra
    points, so a point that starts on a control point lands exactly on that
    control point's endpoint. With ``reverse=True`` integration runs from
    t = 1 back to 0, starting at the trajectory's end state.
    """
    x = np.asarray(extra, dtype=float)
    dt = 1.0 / trajectory.steps
    if reverse:
        q0, p0, dt = trajectory.positions[-1], trajectory.momenta[-1], -dt
    else:
        q0, p0 = trajectory.positions[0], trajectory.momenta[0]
    _, _, x_end, _ = _integrate(q0, p0, x, trajectory.steps, dt, cfg.kernel)
    return x_end


def hamiltonian_drift(trajectory: Trajectory, cfg: ShootingConfig) -> float:
    """Largest relative deviation of H along the trajectory."""
    values = [
        hamiltonian(q, p, cfg.kernel)
        for q, p in zip(trajectory.positions, trajectory.momenta)
    ]
    h0 = values[0]
    return max(abs(h - h0) for h in values) / max(abs(h0), 1e-12)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Everything the registration objective needs beyond the two shapes."""

    lam: float
    variant: str
    matching: MatchingConfig
    shooting: ShootingConfig

    def __post_init__(self):
        if not (self.lam > 0):
            raise ConfigError("lambda must be positive")


def _check_momenta(p0, source):
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != source.vertices.shape:
        raise ValueError(
            f"momenta shape {p0.shape} does not match source vertices {source.vertices.shape}"
        )
    if not np.all(np.isfinite(p0)):
        raise ValueError("momenta contain non-finite values")
    return p0


def objective_parts(p0, source: DiscreteShape, target: DiscreteShape, cfg: ObjectiveConfig):
    """(total, data term, regularization term) of the shooting objective."""
    p0 = _check_momenta(p0, source)
    q0 = source.vertices
    traj = shoot(q0, p0, cfg.shooting)
    deformed = source.with_vertices(traj.positions[-1])
    data = dissimilarity_value(cfg.variant, deformed.atoms, target.atoms, cfg.matching)
    reg = 2.0 * cfg.lam * hamiltonian(q0, p0, cfg.shooting.kernel)
    return data + reg, data, reg


def objective(p0, source: DiscreteShape, target: DiscreteShape, cfg: ObjectiveConfig) -> float:
    return objective_parts(p0, source, target, cfg)[0]


def objective_with_gradient(p0, source: DiscreteShape, target: DiscreteShape, cfg: ObjectiveConfig):
    """Objective value, gradient w.r.t. initial momenta, and the data/reg split."""
    p0 = _check_momenta(p0, source)
    q0 = source.vertices
    nt = cfg.shooting.time_steps
    dt = 1.0 / nt
    kernel = cfg.shooting.kernel
    qs, ps, _, stages = _integrate(q0, p0, None, nt, dt, kernel, keep_stages=True)

    deformed = source.with_vertices(qs[-1])
    data, data_grad = dissimilarity_with_vertex_gradient(
        cfg.variant, deformed, target, cfg.matching
    )
    reg = 2.0 * cfg.lam * hamiltonian(q0, p0, kernel)
    total = data + reg

    # Reverse sweep: adjoint of (q, p) through each RK4 step. The terminal
    # adjoint is the dissimilarity gradient on the q channel only.
    aq, ap = data_grad, np.zeros_like(data_grad)
    for step in range(nt - 1, -1, -1):
        q, p = qs[step], ps[step]
        k1, k2, k3 = stages[step]
        y2 = (q + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1])
        y3 = (q + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1])
        y4 = (q + dt * k3[0], p + dt * k3[1])

        g4 = _rhs_vjp(*y4, dt / 6.0 * aq, dt / 6.0 * ap, kernel)
        b3q, b3p = dt / 3.0 * aq + dt * g4[0], dt / 3.0 * ap + dt * g4[1]
        g3 = _rhs_vjp(*y3, b3q, b3p, kernel)
        b2q, b2p = dt / 3.0 * aq + 0.5 * dt * g3[0], dt / 3.0 * ap + 0.5 * dt * g3[1]
        g2 = _rhs_vjp(*y2, b2q, b2p, kernel)
        b1q, b1p = dt / 6.0 * aq + 0.5 * dt * g2[0], dt / 6.0 * ap + 0.5 * dt * g2[1]
        g1 = _rhs_vjp(q, p, b1q, b1p, kernel)
        aq = aq + g1[0] + g2[0] + g3[0] + g4[0]
        ap = ap + g1[1] + g2[1] + g3[1] + g4[1]

    grad = ap + 2.0 * cfg.lam * (deformation_gram(q0, q0, kernel) @ p0)
    return total, grad, data, reg


def objective_gradient(p0, source: DiscreteShape, target: DiscreteShape, cfg: ObjectiveConfig) -> np.ndarray:
    """Exact gradient of the discrete objective with respect to the momenta."""
    return objective_with_gradient(p0, source, target, cfg)[1]
