"""Malliavin derivatives of the viscous solution

D_{r,z_k} u(t) solves the tangent equation

    dw + d/dx (f'(u) w) dt = sum_j d_u sigma(x, u, z_j) w W(dt, dz_j) + eps d^2w/dx^2 dt

for t > r, started from w(r) = sigma(x, u(r), z_k), and vanishes for t < r.
On the grid the derivative is the derivative of the scheme with respect to
the increment dW[r, k]: a cell average of D over the (r, z_k) cell.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from entropy_lab.grid import GridField
from entropy_lab.noise import (
    NoisePath,
    SigmaFamily,
    d_sigma_du,
    sample_increments,
    shift_path,
    sigma_all,
)
from entropy_lab.util import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_MAX_WORKERS,
    ConfigError,
    InstabilityError,
    mean_ci,
    run_monte_carlo,
)
from entropy_lab.viscous_solver import (
    FluxFamily,
    SolverConfig,
    Trajectory,
    linearized_flux_divergence,
    solve_batch,
    solve_path,
)
from entropy_lab.weights import Mollifier, weighted_lp_norm

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TangentField:
    """D_{r,z_k} u at every step of the solver, zero before the birth step

    Attributes:
        r_index: birth step r
        k: noise node
        trajectory: the derivative at steps 0..n_steps
        born: False when r lies past the last step
    """

    r_index: int
    k: int
    trajectory: Trajectory
    born: bool

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.values

    def at_step(self, step: int) -> GridField:
        return self.trajectory.at_step(step)

    @property
    def final(self) -> GridField:
        return self.trajectory.final


def _require_full(cfg: SolverConfig, base: Trajectory, last: int):
    if len(base) < last + 1 or not np.array_equal(base.steps[: last + 1], np.arange(last + 1)):
        raise ConfigError("the tangent solver needs the base solution at every step")


def tangent_march(
    cfg: SolverConfig,
    base_values: np.ndarray,
    increments: np.ndarray,
    r_index: int,
    profile: np.ndarray,
    last: int,
) -> np.ndarray:
    """Linear steps of the tangent scheme for steps r..last

    base_values has shape (>= last + 1, *batch, n_x) and increments
    (*batch, >= last, m). Returns an array of shape (last - r + 1, *batch, n_x)
    whose first row is profile.
    """
    grid, x = cfg.grid, cfg.grid.x
    propagator = cfg.propagator
    w = np.broadcast_to(profile, base_values.shape[1:]).astype(float)
    out = np.empty((last - r_index + 1,) + w.shape)
    out[0] = w
    if last == r_index:
        return out
    w = propagator.apply(w)
    out[1] = w
    for n in range(r_index + 1, last):
        u = base_values[n]
        dW = increments[..., n, :]
        pre = (
            w
            - cfg.dt * linearized_flux_divergence(w, u, cfg.flux, grid.dx)
            + np.einsum("k...x,...k->...x", d_sigma_du(cfg.sigma, x, u), dW) * w
        )
        w = propagator.apply(pre)
        if not np.all(np.isfinite(w)):
            logger.warning("tangent born at step %d blew up at step %d", r_index, n + 1)
            raise InstabilityError(f"non-finite tangent at step {n + 1} (born at {r_index})")
        out[n + 1 - r_index] = w
    return out


def solve_tangent(
    cfg: SolverConfig,
    base: Trajectory,
    path: NoisePath,
    r_index: int,
    k: int,
    profile: np.ndarray | None = None,
) -> TangentField:
    """Solve the tangent equation on the frozen coefficients of a base path

    Args:
        cfg (SolverConfig): the configuration the base was solved with
        base (Trajectory): the base solution stored at every step
        path (NoisePath): the path that drove the base solution
        r_index (int): birth step
        k (int): noise node
        profile (np.ndarray): initial datum at step r, sigma(., u(r), z_k)
          by default

    Returns:
        TangentField: the derivative at every step
    """
    if not 0 <= k < cfg.m:
        raise IndexError(f"node {k} outside a noise space of {cfg.m} nodes")
    if r_index < 0:
        raise IndexError(f"birth step must be non-negative, got {r_index}")
    n, grid = cfg.n_steps, cfg.grid
    values = np.zeros((n + 1, grid.n_x))
    steps = np.arange(n + 1)
    if r_index > n:
        return TangentField(r_index, k, Trajectory(steps, values, grid, cfg.dt), False)
    _require_full(cfg, base, n)
    if profile is None:
        profile = sigma_all(cfg.sigma, grid.x, base.values[r_index])[k]
    values[r_index:] = tangent_march(
        cfg, base.values, path.increments, r_index, np.asarray(profile, dtype=float), n
    )
    return TangentField(r_index, k, Trajectory(steps, values, grid, cfg.dt), True)


def fd_malliavin_oracle(
    cfg: SolverConfig,
    u0: GridField,
    path: NoisePath,
    r_index: int,
    k: int,
    eps_fd: float | None = None,
    two_sided: bool = False,
) -> GridField:
    """Difference quotient of u(T) in the increment dW[r_index, k]

    Shifting one increment by eps_fd moves W by eps_fd times the indicator of
    the (r, z_k) cell, so the quotient approximates the average of D_{r,z_k} u(T)
    over that cell.
    """
    if eps_fd is None:
        scale = np.sqrt(cfg.dt * cfg.sigma.space.mu[k])
        eps_fd = float(np.sqrt(np.finfo(float).eps) * scale)
    plus = solve_path(cfg, u0, shift_path(path, r_index, k, eps_fd)).final
    if two_sided:
        minus = solve_path(cfg, u0, shift_path(path, r_index, k, -eps_fd)).final
        return plus.with_values((plus.values - minus.values) / (2.0 * eps_fd))
    centre = solve_path(cfg, u0, path).final
    return plus.with_values((plus.values - centre.values) / eps_fd)


def tangent_oracle_gap(
    cfg: SolverConfig, u0: GridField, path: NoisePath, r_index: int, k: int
) -> float:
    """Relative L^2(phi) gap between solve_tangent and the two-sided oracle at T"""
    base = solve_path(cfg, u0, path, store_all=True)
    tangent = solve_tangent(cfg, base, path, r_index, k).final
    oracle = fd_malliavin_oracle(cfg, u0, path, r_index, k, two_sided=True)
    w = cfg.weight
    scale = float(weighted_lp_norm(oracle, 2.0, w))
    gap = float(weighted_lp_norm(oracle.with_values(tangent.values - oracle.values), 2.0, w))
    return gap / scale if scale > 0 else gap


def tangent_growth_by_eps(
    cfg: SolverConfig,
    u0: GridField,
    path: NoisePath,
    r_index: int,
    k: int,
    eps_list,
) -> pd.DataFrame:
    """Growth of one tangent from its birth step to T for each viscosity

    Whether the growth constants stay bounded as eps -> 0 is open; the table
    only records them.
    """
    rows = []
    for eps in eps_list:
        run = cfg.with_(eps=eps)
        base = solve_path(run, u0, path, store_all=True)
        tangent = solve_tangent(run, base, path, r_index, k)
        born = float(weighted_lp_norm(tangent.at_step(min(r_index, run.n_steps)), 2.0, run.weight))
        final = float(weighted_lp_norm(tangent.final, 2.0, run.weight))
        rows.append((eps, born, final, final / born if born > 0 else np.nan))
    return pd.DataFrame(rows, columns=["eps", "norm_at_birth", "norm_at_T", "growth"])


def geometric_tangent_oracle(
    cfg: SolverConfig, level: float, path: NoisePath, r_index: int, k: int
) -> np.ndarray:
    """D_{r,z_k} u at every step for sigma_j = g_j u and spatially constant data

    The solution stays constant in x and follows u_{n+1} = u_n (1 + sum_j g_j dW[n, j]).
    """
    if cfg.sigma.family != SigmaFamily.LINEAR or cfg.sigma.is_x_dependent:
        raise ConfigError("the geometric oracle needs x-independent linear noise")
    growth = 1.0 + path.increments[: cfg.n_steps] @ cfg.sigma.g_array
    u = level * np.concatenate([[1.0], np.cumprod(growth)])
    out = np.zeros(cfg.n_steps + 1)
    if r_index > cfg.n_steps:
        return out
    g = cfg.sigma.g_array[k]
    out[r_index] = g * u[r_index]
    tail = np.concatenate([[1.0], np.cumprod(growth[r_index + 1 :])])
    out[r_index + 1 :] = g * u[r_index] * tail[: cfg.n_steps - r_index]
    return out


def _continuity_lags(cfg: SolverConfig, r0_list) -> list[np.ndarray]:
    lags = []
    for r0 in r0_list:
        if r0 < cfg.dt:
            raise ValueError(f"r0={r0} is below the time step {cfg.dt}")
        lags.append(Mollifier(r0, shifted=True).lag_weights(cfg.dt))
    return lags


def weak_time_continuity_stat(
    cfg: SolverConfig,
    u0: GridField,
    n_mc: int,
    r_index: int,
    r0_list,
    psi: GridField,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """Monte Carlo estimate of

        T_{r0} = E int int int (D_{r,z} u(t,x) - sigma(x, u(r,x), z)) J^+_{r0}(t - r) psi phi

    at the birth step r_index, for every r0 in r0_list.

    The bound column is the sampled Cauchy-Schwarz majorant
    mu(Z)^(1/2) E int J^+ ||D_r u(t) - sigma(u(r))||_{L^2(Z; L^2(phi))} dt ||psi||_{2,phi};
    moment is sup_t E ||D_r u(t)||^2_{L^2(Z; L^2(phi))} over the sampled lags.

    Returns:
        pd.DataFrame: columns r0, estimate, se, ci_lo, ci_hi, bound, moment
    """
    w = cfg.weight
    if not np.isfinite(w.support_radius):
        raise ConfigError(f"weak time continuity needs a compactly supported weight, got {w}")
    lags = _continuity_lags(cfg, r0_list)
    span = max(len(l) for l in lags) - 1
    last = r_index + span
    if last > cfg.n_steps:
        raise ConfigError(f"r_index + 2 r0 / dt = {last} exceeds n_steps = {cfg.n_steps}")
    short = cfg.with_(n_steps=max(last, 1))
    grid, x = cfg.grid, cfg.grid.x
    mu = cfg.sigma.space.mu_array
    phi = w.on_grid(grid)
    psi_norm = float(weighted_lp_norm(psi, 2.0, w))

    def sample(chunk: range):
        inc = sample_increments(cfg.sigma.space, cfg.dt, short.n_steps, seed, chunk)
        base = solve_batch(short, u0, inc, store_all=True, streams=list(chunk)).values
        sig = sigma_all(cfg.sigma, x, base[r_index])
        pairing = np.zeros((span + 1, len(chunk)))
        gap_sq = np.zeros((span + 1, len(chunk)))
        moment = np.zeros((span + 1, len(chunk)))
        for k in range(cfg.m):
            D = tangent_march(short, base, inc, r_index, sig[k], last)
            A = D - sig[k]
            pairing += mu[k] * grid.integrate(A * psi.values * phi)
            gap_sq += mu[k] * grid.integrate(A * A * phi)
            moment += mu[k] * grid.integrate(D * D * phi)
        stats = np.stack([lw @ pairing[: len(lw)] * cfg.dt for lw in lags], axis=1)
        majorant = np.sqrt(mu.sum()) * psi_norm * np.sqrt(gap_sq)
        bounds = np.stack([lw @ majorant[: len(lw)] * cfg.dt for lw in lags], axis=1)
        return stats, bounds, moment.T

    stats, bounds, moments = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "T_r0")
    mean, se, lo, hi = mean_ci(stats)
    sup_moment = float(np.max(moments.mean(axis=0)))
    return pd.DataFrame(
        {
            "r0": list(r0_list),
            "estimate": mean,
            "se": se,
            "ci_lo": lo,
            "ci_hi": hi,
            "bound": bounds.mean(axis=0),
            "moment": sup_moment,
        }
    )


def weak_time_continuity_closed_form(cfg: SolverConfig, r0_list, psi: GridField) -> np.ndarray:
    """T_{r0} for zero flux and additive noise, where D_{r,z} u(t) = Phi(t - r) sigma(., z)"""
    if cfg.flux.family != FluxFamily.ZERO or not cfg.sigma.is_additive:
        raise ConfigError("the closed form needs a zero flux and additive noise")
    lags = _continuity_lags(cfg, r0_list)
    grid = cfg.grid
    sig = sigma_all(cfg.sigma, grid.x, np.zeros(grid.n_x))
    mu = cfg.sigma.space.mu_array
    weight = psi.values * cfg.weight.on_grid(grid)
    span = max(len(l) for l in lags)
    pairing = np.zeros(span)
    D = sig.copy()
    for lag in range(span):
        pairing[lag] = np.sum(mu * grid.integrate((D - sig) * weight))
        D = cfg.propagator.apply(D)
    return np.array([lw @ pairing[: len(lw)] * cfg.dt for lw in lags])


@dataclass(frozen=True, eq=False)
class SmoothRV:
    """V = f(W(h_1), ..., W(h_n)) with W(h) = sum_{n,k} h[n, k] dW[n, k]

    Attributes:
        outer: f, mapping an array (..., n) to (...)
        gradient: the gradient of f, mapping (..., n) to (..., n)
        directions: h_1..h_n stacked to shape (n, n_steps, m)
        name: label used in reports
    """

    outer: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    directions: np.ndarray
    name: str = "V"

    @classmethod
    def constant(cls, c: float, n_steps: int, m: int) -> SmoothRV:
        return cls(
            lambda y: np.full(y.shape[:-1], float(c)),
            lambda y: np.zeros(y.shape),
            np.zeros((0, n_steps, m)),
            f"{c:g}",
        )

    @classmethod
    def linear(cls, h: np.ndarray) -> SmoothRV:
        """V = W(h)"""
        return cls(lambda y: y[..., 0], np.ones_like, np.asarray(h, dtype=float)[None], "W(h)")

    @classmethod
    def composed(cls, g, g_prime, h: np.ndarray, name: str = "g(W(h))") -> SmoothRV:
        """V = g(W(h)) for a smooth g with bounded derivative"""
        return cls(
            lambda y: g(y[..., 0]),
            lambda y: g_prime(y),
            np.asarray(h, dtype=float)[None],
            name,
        )

    @property
    def is_constant(self) -> bool:
        return len(self.directions) == 0 or not self.directions.any()

    def scaled(self, factor: float) -> SmoothRV:
        """The same outer function along the directions factor * h_i"""
        return SmoothRV(self.outer, self.gradient, self.directions * factor, self.name)

    def w_values(self, increments: np.ndarray) -> np.ndarray:
        """W(h_i) for increments of shape (..., n_steps, m), shape (..., n)"""
        n_steps = self.directions.shape[1]
        return np.einsum("inm,...nm->...i", self.directions, increments[..., :n_steps, :])


def smooth_rv_eval(V: SmoothRV, path: NoisePath | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value of V and D_{t,z} V over the cells

    D_{t,z} V = sum_i d_i f(W(h_1), ..., W(h_n)) h_i(t, z)

    Returns:
        tuple: V of shape (...) and DV of shape (..., n_steps, m)
    """
    increments = path.increments if isinstance(path, NoisePath) else np.asarray(path)
    y = V.w_values(increments)
    grad = V.gradient(y)
    return V.outer(y), np.einsum("...i,inm->...nm", grad, V.directions)


def h_inner(a: np.ndarray, b: np.ndarray, dt: float, mu) -> np.ndarray:
    """<a, b>_H = sum_{n,k} a[n, k] b[n, k] dt mu_k over the last two axes"""
    return np.sum(a * b * np.asarray(mu, dtype=float), axis=(-2, -1)) * dt
