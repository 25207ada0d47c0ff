"""Viscous approximation of the stochastic conservation law

    du + d/dx f(u) dt = int_Z sigma(x, u, z) W(dt, dz) + eps d^2u/dx^2 dt

on the periodic grid, marched with the stochastic exponential Euler scheme

    u_{n+1} = Phi(dt) * [u_n - dt D f(u_n) + sum_k sigma(., u_n, z_k) dW[n, k]]

where D is the local Lax-Friedrichs flux divergence and Phi(dt) the heat
propagator. The scheme is the discrete mild formula; picard_mild_solve
iterates the same formula as a fixed point map and serves as its oracle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Sequence

import numpy as np
import pandas as pd

from entropy_lab.grid import Grid, GridField
from entropy_lab.heat_kernel import HeatPropagator, heat_propagator
from entropy_lab.noise import (
    NoisePath,
    SigmaCoeff,
    SigmaFamily,
    sample_increments,
    sigma_all,
    sigma_lip_distance,
)
from entropy_lab.util import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_MAX_WORKERS,
    ConfigError,
    InstabilityError,
    mean_ci,
    run_monte_carlo,
)
from entropy_lab.weights import Weight, modulus_w, poly_weight, weighted_lp_norm

logger = logging.getLogger(__name__)

"""Largest problem picard_mild_solve accepts"""
PICARD_MAX_CELLS = 128
PICARD_MAX_STEPS = 256


class FluxFamily(Enum):
    ZERO = "zero"
    LINEAR = "linear"
    BURGERS = "burgers"
    SINE = "sine"


@dataclass(frozen=True)
class FluxFn:
    """A globally Lipschitz C^1 flux with f(0) = 0

    Attributes:
        family: ZERO, LINEAR (f = a u), BURGERS (u^2 / 2 with the slope
          clipped at +-u_max) or SINE (f = b (1 - cos u))
        param: a, u_max or b
    """

    family: FluxFamily
    param: float = 0.0

    def __post_init__(self):
        if self.family == FluxFamily.BURGERS and not self.param > 0:
            raise ConfigError(f"clipping level must be positive, got {self.param}")

    def __str__(self) -> str:
        if self.family == FluxFamily.ZERO:
            return "zero"
        return f"{self.family.value}:{self.param:g}"

    @property
    def lip_norm(self) -> float:
        return abs(self.param) if self.family != FluxFamily.ZERO else 0.0

    def f(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.family == FluxFamily.ZERO:
            return np.zeros_like(u)
        if self.family == FluxFamily.LINEAR:
            return self.param * u
        if self.family == FluxFamily.SINE:
            return self.param * (1.0 - np.cos(u))
        U = self.param
        a = np.abs(u)
        return np.where(a <= U, 0.5 * u * u, U * a - 0.5 * U * U)

    def f_prime(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.family == FluxFamily.ZERO:
            return np.zeros_like(u)
        if self.family == FluxFamily.LINEAR:
            return np.full_like(u, self.param)
        if self.family == FluxFamily.SINE:
            return self.param * np.sin(u)
        return np.clip(u, -self.param, self.param)

    def lip_distance(self, other: FluxFn, u_max: float = 20.0) -> float:
        """Sampled ||f_1 - f_2||_Lip = sup |f_1' - f_2'|"""
        u = np.linspace(-u_max, u_max, 40001)
        return float(np.max(np.abs(self.f_prime(u) - other.f_prime(u))))


def flux_from_key(key: str) -> FluxFn:
    """Parse "zero", "linear:a", "burgers:u_max" or "sine:b" """
    parts = key.strip().split(":")
    try:
        family = FluxFamily(parts[0])
        param = float(parts[1]) if family != FluxFamily.ZERO else 0.0
    except (ValueError, IndexError) as e:
        raise ConfigError(f"Unable to parse flux '{key}': {e}") from e
    return FluxFn(family, param)


def initial_field(key: str, grid: Grid) -> GridField:
    """Parse an initial datum

    Keys: "zero", "const:c", "bump:a[:center]" (a Gaussian bump of unit
    width), "step:a" (a on |x| < 1), "sine:a" (a sin(pi x / L)) and
    "riemann:left:right" (jump at x = 0).
    """
    parts = key.strip().split(":")
    x = grid.x
    try:
        kind = parts[0]
        args = [float(p) for p in parts[1:]]
        if kind == "zero":
            values = np.zeros_like(x)
        elif kind == "const":
            values = np.full_like(x, args[0])
        elif kind == "bump":
            center = args[1] if len(args) > 1 else 0.0
            values = args[0] * np.exp(-((x - center) ** 2))
        elif kind == "step":
            values = np.where(np.abs(x) < 1.0, args[0], 0.0)
        elif kind == "sine":
            values = args[0] * np.sin(np.pi * x / grid.half_width)
        elif kind == "riemann":
            values = np.where(x < 0.0, args[0], args[1])
        else:
            raise ValueError(f"unknown kind '{kind}'")
    except (ValueError, IndexError) as e:
        raise ConfigError(f"Unable to parse initial datum '{key}': {e}") from e
    return GridField(values, grid)


class Scheme(Enum):
    EXP_EULER = "exp_euler"
    PICARD_MILD = "picard_mild"


@dataclass(frozen=True)
class SolverConfig:
    """Everything the marcher needs besides the initial datum and the noise

    Attributes:
        grid: the periodic grid
        eps: viscosity
        dt: time step
        n_steps: number of steps, T = n_steps * dt
        flux: the flux f
        sigma: the noise coefficient, which carries the noise space
        weight: the weight of all reported norms
        scheme: time stepping scheme
        heat_symbol: "lattice" (positive kernel) or "gaussian"
    """

    grid: Grid
    eps: float
    dt: float
    n_steps: int
    flux: FluxFn
    sigma: SigmaCoeff
    weight: Weight = field(default_factory=lambda: poly_weight(4))
    scheme: Scheme = Scheme.EXP_EULER
    heat_symbol: str = "lattice"

    def __post_init__(self):
        if self.eps < 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps}")
        if not self.dt > 0 or self.n_steps < 1:
            raise ConfigError(f"need dt > 0 and n_steps >= 1, got {self.dt}, {self.n_steps}")
        cfl = self.dt * self.flux.lip_norm / self.grid.dx
        if cfl > 0.5:
            raise ConfigError(f"CFL number {cfl:.3g} exceeds 0.5")
        noise = self.dt * float(np.max(self.sigma.M)) ** 2 * sum(self.sigma.space.mu)
        if noise > 1.0:
            raise ConfigError(f"noise stability number {noise:.3g} exceeds 1")

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    @property
    def propagator(self) -> HeatPropagator:
        return heat_propagator(self.grid, self.eps * self.dt, self.heat_symbol)

    @property
    def m(self) -> int:
        return self.sigma.space.m

    def with_(self, **changes) -> SolverConfig:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots of a (possibly batched) solution

    values has shape (n_snapshots, *batch, n_x); steps holds the step index
    of every snapshot.
    """

    steps: np.ndarray
    values: np.ndarray
    grid: Grid
    dt: float

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt

    def __len__(self) -> int:
        return len(self.steps)

    def index(self, step: int) -> int:
        hits = np.flatnonzero(self.steps == step)
        if not len(hits):
            raise KeyError(f"step {step} was not stored")
        return int(hits[0])

    def at_step(self, step: int) -> GridField:
        return GridField(self.values[self.index(step)], self.grid, step * self.dt)

    def field(self, i: int) -> GridField:
        return GridField(self.values[i], self.grid, float(self.times[i]))

    @property
    def final(self) -> GridField:
        return self.field(len(self) - 1)


def flux_divergence(u: np.ndarray, flux: FluxFn, dx: float) -> np.ndarray:
    """Local Lax-Friedrichs divergence along the last axis, dissipation ||f||_Lip"""
    up = np.roll(u, -1, axis=-1)
    fu = flux.f(u)
    F = 0.5 * (fu + np.roll(fu, -1, axis=-1)) - 0.5 * flux.lip_norm * (up - u)
    return (F - np.roll(F, 1, axis=-1)) / dx


def linearized_flux_divergence(
    w: np.ndarray, u: np.ndarray, flux: FluxFn, dx: float
) -> np.ndarray:
    """Derivative of flux_divergence at u in the direction w"""
    fw = flux.f_prime(u) * w
    wp = np.roll(w, -1, axis=-1)
    F = 0.5 * (fw + np.roll(fw, -1, axis=-1)) - 0.5 * flux.lip_norm * (wp - w)
    return (F - np.roll(F, 1, axis=-1)) / dx


def noise_forcing(sigma: SigmaCoeff, x: np.ndarray, u: np.ndarray, dW: np.ndarray):
    """sum_k sigma(x, u, z_k) dW[..., k]"""
    return np.einsum("k...x,...k->...x", sigma_all(sigma, x, u), dW)


def _step_values(cfg: SolverConfig, u: np.ndarray, dW: np.ndarray) -> np.ndarray:
    pre = (
        u
        - cfg.dt * flux_divergence(u, cfg.flux, cfg.grid.dx)
        + noise_forcing(cfg.sigma, cfg.grid.x, u, dW)
    )
    return cfg.propagator.apply(pre)


def step_exp_euler(u: GridField, cfg: SolverConfig, dW: np.ndarray) -> GridField:
    """One exponential Euler step driven by the increments dW of shape (..., m)"""
    return u.with_values(_step_values(cfg, u.values, np.asarray(dW)), t=u.t + cfg.dt)


def iterate_steps(
    cfg: SolverConfig, u0: np.ndarray, increments: np.ndarray
) -> Iterator[np.ndarray]:
    """Yield u_1, u_2, ... for increments of shape (..., n_steps, m)"""
    u = u0
    for n in range(increments.shape[-2]):
        u = _step_values(cfg, u, increments[..., n, :])
        yield u


def snapshot_schedule(n_steps: int, count: int) -> np.ndarray:
    """Step 0 and count roughly evenly spaced steps ending at n_steps"""
    return np.unique(np.rint(np.linspace(0, n_steps, count + 1)).astype(int))


def steps_for_times(cfg: SolverConfig, times: Sequence[float]) -> np.ndarray:
    """Convert snapshot times to steps; every time must be a multiple of dt"""
    steps = []
    for t in times:
        n = int(round(t / cfg.dt))
        if abs(n * cfg.dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= n <= cfg.n_steps:
            raise ConfigError(f"snapshot time {t} is not a step of dt={cfg.dt} in [0, T]")
        steps.append(n)
    return np.array(sorted(set(steps)), dtype=int)


def _check_increments(cfg: SolverConfig, increments: np.ndarray, dt: float | None):
    if increments.shape[-2] < cfg.n_steps:
        raise ValueError(
            f"noise has {increments.shape[-2]} steps, the solver needs {cfg.n_steps}"
        )
    if increments.shape[-1] != cfg.m:
        raise ConfigError(f"noise has {increments.shape[-1]} nodes, sigma has {cfg.m}")
    if dt is not None and abs(dt - cfg.dt) > 1e-12 * cfg.dt:
        raise ConfigError(f"noise step {dt} differs from solver step {cfg.dt}")


def _march(
    cfg: SolverConfig,
    u0: np.ndarray,
    increments: np.ndarray,
    keep: np.ndarray,
    streams: Sequence[int] | None = None,
) -> np.ndarray:
    batch = increments.shape[:-2]
    u = np.broadcast_to(np.asarray(u0, dtype=float), batch + (cfg.grid.n_x,)).copy()
    keep = np.asarray(keep, dtype=int)
    out = np.empty((len(keep),) + u.shape)
    slot = 0
    if keep[0] == 0:
        out[0] = u
        slot = 1
    last = int(keep[-1])
    for n, u in enumerate(iterate_steps(cfg, u, increments[..., :last, :]), start=1):
        if not np.all(np.isfinite(u)):
            bad = np.unique(np.argwhere(~np.isfinite(u))[:, 0]) if batch else []
            where = [streams[i] for i in bad] if streams is not None and batch else streams
            logger.warning("non-finite values at step %d (streams %s)", n, where)
            raise InstabilityError(f"non-finite values at step {n}, stream(s) {where}")
        if slot < len(keep) and n == keep[slot]:
            out[slot] = u
            slot += 1
    return out


def solve_path(
    cfg: SolverConfig,
    u0: GridField,
    path: NoisePath,
    snapshot_steps: Sequence[int] | None = None,
    snapshot_times: Sequence[float] | None = None,
    store_all: bool = False,
) -> Trajectory:
    """Solve on one noise path

    Args:
        cfg (SolverConfig): solver configuration
        u0 (GridField): initial datum
        path (NoisePath): noise increments, at least cfg.n_steps rows
        snapshot_steps: steps to store (step 0 and the final step by default)
        snapshot_times: times to store instead of steps, multiples of dt
        store_all (bool): store every step

    Returns:
        Trajectory: the stored snapshots
    """
    _check_increments(cfg, path.increments, path.dt)
    if cfg.scheme == Scheme.PICARD_MILD:
        return picard_mild_solve(cfg, u0, path).trajectory
    keep = _keep_steps(cfg, snapshot_steps, snapshot_times, store_all)
    logger.debug("solving %s on %r", cfg.flux, path)
    values = _march(cfg, u0.values, path.increments, keep, streams=[path.stream_id])
    return Trajectory(keep, values, cfg.grid, cfg.dt)


def _keep_steps(cfg, snapshot_steps, snapshot_times, store_all) -> np.ndarray:
    if store_all:
        return np.arange(cfg.n_steps + 1)
    if snapshot_times is not None:
        steps = steps_for_times(cfg, snapshot_times)
    elif snapshot_steps is not None:
        steps = np.asarray(sorted(set(int(s) for s in snapshot_steps)), dtype=int)
        if steps[0] < 0 or steps[-1] > cfg.n_steps:
            raise ConfigError(f"snapshot steps must lie in [0, {cfg.n_steps}]")
    else:
        steps = np.array([0, cfg.n_steps])
    return np.union1d([0], steps).astype(int)


def solve_batch(
    cfg: SolverConfig,
    u0: GridField | np.ndarray,
    increments: np.ndarray,
    snapshot_steps: Sequence[int] | None = None,
    store_all: bool = False,
    streams: Sequence[int] | None = None,
) -> Trajectory:
    """March a stack of paths together

    increments has shape (batch, n_steps, m); u0 is shared or given per path.
    The values of the result have shape (n_snapshots, batch, n_x).
    """
    increments = np.asarray(increments, dtype=float)
    _check_increments(cfg, increments, None)
    keep = _keep_steps(cfg, snapshot_steps, None, store_all)
    values = u0.values if isinstance(u0, GridField) else np.asarray(u0, dtype=float)
    return Trajectory(keep, _march(cfg, values, increments, keep, streams), cfg.grid, cfg.dt)


def _kernel_powers(cfg: SolverConfig, n: int) -> np.ndarray:
    """Kernels of Phi(s dt) for s = 1..n, centred at x = 0"""
    mult = cfg.propagator.multiplier
    powers = mult[None, :] ** np.arange(1, n + 1)[:, None]
    delta_hat = np.fft.rfft(cfg.grid.delta())
    return np.fft.irfft(powers * delta_hat, n=cfg.grid.n_x, axis=-1)


@dataclass(frozen=True, eq=False)
class PicardResult:
    """Final iterate of the mild map and its contraction history

    Attributes:
        trajectory: the final iterate at every step
        distances: ||U^{n+1} - U^n||_beta per iteration
        beta: the exponent of the norm
        beta_threshold: beta above which the map provably contracts
        contraction_bound: the proven contraction factor at beta
    """

    trajectory: Trajectory
    distances: np.ndarray
    beta: float
    beta_threshold: float
    contraction_bound: float

    @property
    def ratios(self) -> np.ndarray:
        d = self.distances
        prev = d[:-1]
        return np.where(prev > 0, d[1:] / np.where(prev > 0, prev, 1.0), 0.0)

    def max_ratio(self, first: int = 3, last: int = 8) -> float:
        """Largest ratio d_i / d_{i-1} over iterations first..last"""
        r = self.ratios[max(first - 1, 0) : last]
        return float(np.max(r)) if len(r) else 0.0

    @property
    def contracting(self) -> bool:
        return self.beta > self.beta_threshold

    def history(self) -> pd.DataFrame:
        n = len(self.distances)
        return pd.DataFrame(
            {
                "iteration": np.arange(1, n + 1),
                "distance": self.distances,
                "ratio": np.concatenate([[np.nan], self.ratios]),
            }
        )


def picard_threshold(cfg: SolverConfig, increments: np.ndarray) -> tuple[float, float]:
    """(h, l): kernel mass and per-step Lipschitz bound of the discrete mild map

    The map contracts in the beta-norm with factor h l / (exp(beta dt) - 1).
    """
    grid, w = cfg.grid, cfg.weight
    kernels = _kernel_powers(cfg, cfg.n_steps)
    spread = 1.0 + modulus_w(2.0, w, np.abs(grid.x))
    h = float(np.max(np.sum(np.abs(kernels) * spread, axis=-1) * grid.dx))
    flux_part = 4.0 * cfg.flux.lip_norm * cfg.dt * (1.0 + float(modulus_w(2.0, w, grid.dx)))
    noise_part = np.abs(increments[: cfg.n_steps]) @ cfg.sigma.M
    return h, float(flux_part / grid.dx + np.max(noise_part))


def picard_mild_solve(
    cfg: SolverConfig,
    u0: GridField,
    path: NoisePath,
    n_iter: int = 12,
    beta: float | None = None,
) -> PicardResult:
    """Iterate the discrete mild map from U = 0

    S(U)_0 = u0 and S(U)_{n+1} = Phi(dt) [S(U)_n - dt D f(U_n) + sigma(U_n) dW_n];
    the exponential Euler solution is its fixed point.
    """
    if cfg.grid.n_x > PICARD_MAX_CELLS or cfg.n_steps > PICARD_MAX_STEPS:
        raise ConfigError(
            f"picard_mild_solve needs n_x <= {PICARD_MAX_CELLS} and "
            f"n_steps <= {PICARD_MAX_STEPS}"
        )
    _check_increments(cfg, path.increments, path.dt)
    inc = path.increments[: cfg.n_steps]
    h, ell = picard_threshold(cfg, inc)
    threshold = np.log1p(h * ell) / cfg.dt
    if beta is None:
        beta = np.log1p(2.0 * h * ell) / cfg.dt
    bound = h * ell / np.expm1(beta * cfg.dt) if beta > 0 else np.inf
    if beta <= threshold:
        logger.warning("beta=%.3g is below the contraction threshold %.3g", beta, threshold)

    grid, w = cfg.grid, cfg.weight
    x = grid.x
    decay = np.exp(-beta * cfg.dt * np.arange(cfg.n_steps + 1))
    U = np.zeros((cfg.n_steps + 1, grid.n_x))
    distances = []
    for _ in range(n_iter):
        forcing = (
            -cfg.dt * flux_divergence(U[:-1], cfg.flux, grid.dx)
            + noise_forcing(cfg.sigma, x, U[:-1], inc)
        )
        S = np.empty_like(U)
        S[0] = u0.values
        for n in range(cfg.n_steps):
            S[n + 1] = cfg.propagator.apply(S[n] + forcing[n])
        gap = weighted_lp_norm(GridField(S - U, grid), 2.0, w)
        distances.append(float(np.max(decay * gap)))
        U = S
    logger.debug("picard distances %s", distances)
    trajectory = Trajectory(np.arange(cfg.n_steps + 1), U, grid, cfg.dt)
    return PicardResult(trajectory, np.array(distances), float(beta), float(threshold), float(bound))


def moment_growth_bound(cfg: SolverConfig) -> float:
    """Deterministic growth rate C_phi ||f||_Lip + eps sup (phi'' / phi)_+"""
    x = cfg.grid.x
    curvature = cfg.weight.laplacian(x) / cfg.weight(x)
    return cfg.weight.c_phi * cfg.flux.lip_norm + cfg.eps * float(
        np.max(np.maximum(curvature, 0.0))
    )


@dataclass(frozen=True)
class DependenceResult:
    """Both sides of the continuous dependence estimate

    Attributes:
        distances: ||u_1 - u_2||_{p,phi} per step
        lhs: sup_t exp(-beta t) ||u_1 - u_2||_{p,phi}
        rhs: the data distance the estimate is driven by
        constant: the frozen constant C
    """

    distances: pd.Series
    lhs: float
    rhs: float
    constant: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.constant * self.rhs + 1e-12


def dependence_constant(cfg: SolverConfig) -> float:
    """C = 2 exp(T (C_phi ||f||_Lip + ||sigma||_Lip^2 + 1)), frozen per configuration"""
    rate = cfg.weight.c_phi * cfg.flux.lip_norm + cfg.sigma.lip_norm**2 + 1.0
    return 2.0 * float(np.exp(cfg.t_final * rate))


def continuous_dependence_probe(
    cfg1: SolverConfig,
    cfg2: SolverConfig,
    u0_1: GridField,
    u0_2: GridField,
    path: NoisePath,
    p: float = 2.0,
    beta: float = 0.0,
) -> DependenceResult:
    """Compare two solutions driven by the same path against their data distance

    rhs = ||u0_1 - u0_2||_{p,phi} + ||f_1 - f_2||_Lip ||u_1||
          + ||sigma_1 - sigma_2||_Lip (||phi||_1^{1/p} + ||u_1||)

    with ||u_1|| the beta-weighted sup over time of ||u_1(t)||_{p,phi}.
    """
    if (cfg1.grid, cfg1.eps, cfg1.dt, cfg1.n_steps) != (cfg2.grid, cfg2.eps, cfg2.dt, cfg2.n_steps):
        raise ConfigError("continuous dependence needs a shared grid, eps, dt and n_steps")
    if cfg1.sigma.space != cfg2.sigma.space:
        raise ConfigError("continuous dependence needs a shared noise space")
    w = cfg1.weight
    u1 = solve_path(cfg1, u0_1, path, store_all=True)
    u2 = solve_path(cfg2, u0_2, path, store_all=True)
    decay = np.exp(-beta * u1.times)
    gap = weighted_lp_norm(GridField(u1.values - u2.values, cfg1.grid), p, w)
    norm_u1 = float(np.max(decay * weighted_lp_norm(GridField(u1.values, cfg1.grid), p, w)))
    flux_gap = cfg1.flux.lip_distance(cfg2.flux)
    sigma_gap = 0.0 if cfg1.sigma == cfg2.sigma else sigma_lip_distance(cfg1.sigma, cfg2.sigma)
    rhs = (
        float(weighted_lp_norm(GridField(u0_1.values - u0_2.values, cfg1.grid), p, w))
        + flux_gap * norm_u1
        + sigma_gap * (w.l1_norm ** (1.0 / p) + norm_u1)
    )
    return DependenceResult(
        pd.Series(gap, index=u1.times, name="distance"),
        float(np.max(decay * gap)),
        rhs,
        dependence_constant(cfg1),
    )


def _mc_snapshots(
    cfg: SolverConfig,
    u0: GridField,
    statistic,
    n_mc: int,
    seed: int,
    snapshots: int,
    max_workers: int,
    chunk_size: int,
    desc: str,
) -> pd.DataFrame:
    steps = snapshot_schedule(cfg.n_steps, snapshots)

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, chunk)
        traj = solve_batch(cfg, u0, inc, snapshot_steps=steps, streams=list(chunk))
        return np.moveaxis(statistic(traj), 0, 1)

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, desc)
    mean, se, lo, hi = mean_ci(samples)
    return pd.DataFrame(
        {"t": steps * cfg.dt, "mean": mean, "se": se, "ci_lo": lo, "ci_hi": hi}
    )


def lp_moment_curve(
    cfg: SolverConfig,
    u0: GridField,
    p: int,
    n_mc: int,
    seed: int = 0,
    snapshots: int = 10,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """E ||u(t)||_{p,phi}^p at the snapshot times with 95% confidence intervals"""
    if p < 2 or p % 2:
        raise ConfigError(f"p must be an even integer >= 2, got {p}")

    def statistic(traj: Trajectory) -> np.ndarray:
        return weighted_lp_norm(GridField(traj.values, cfg.grid), p, cfg.weight) ** p

    return _mc_snapshots(
        cfg, u0, statistic, n_mc, seed, snapshots, max_workers, chunk_size,
        f"E|u|^{p}",
    )


def central_difference(values: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(values, -1, axis=-1) - np.roll(values, 1, axis=-1)) / (2.0 * dx)


def spatial_derivative_bound(
    cfg: SolverConfig,
    u0: GridField,
    n_mc: int,
    seed: int = 0,
    snapshots: int = 10,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """E ||du/dx(t)||_{2,phi}^2 at the snapshot times"""

    def statistic(traj: Trajectory) -> np.ndarray:
        du = central_difference(traj.values, cfg.grid.dx)
        return weighted_lp_norm(GridField(du, cfg.grid), 2.0, cfg.weight) ** 2

    return _mc_snapshots(
        cfg, u0, statistic, n_mc, seed, snapshots, max_workers, chunk_size, "E|u_x|^2"
    )


def _require_linear(cfg: SolverConfig, *families: SigmaFamily):
    if cfg.flux.family not in (FluxFamily.ZERO, FluxFamily.LINEAR):
        raise ConfigError(f"oracle needs a linear flux, got {cfg.flux}")
    if cfg.sigma.family not in families + (SigmaFamily.ZERO,):
        raise ConfigError(f"oracle needs sigma in {[f.value for f in families]}, got {cfg.sigma}")


def _symbols(cfg: SolverConfig, eps: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Full FFT symbols of the flux divergence and the heat step"""
    e0 = np.zeros(cfg.grid.n_x)
    e0[0] = 1.0
    d = np.fft.fft(flux_divergence(e0, cfg.flux, cfg.grid.dx))
    eps = cfg.eps if eps is None else eps
    heat = heat_propagator(cfg.grid, eps * cfg.dt, cfg.heat_symbol)
    return d, np.fft.fft(heat.apply(e0))


def stochastic_convolution_oracle(
    cfg: SolverConfig, u0: GridField, path: NoisePath, steps: Sequence[int] | None = None
) -> Trajectory:
    """Direct evaluation of the discrete mild sum for additive noise and zero flux

    u_n = Phi^n u0 + sum_{j<n} Phi^(n-j) sum_k sigma_k dW[j, k]
    """
    if cfg.flux.family != FluxFamily.ZERO:
        raise ConfigError("the stochastic convolution oracle needs a zero flux")
    if not cfg.sigma.is_additive:
        raise ConfigError("the stochastic convolution oracle needs additive noise")
    steps = np.arange(cfg.n_steps + 1) if steps is None else np.asarray(steps, dtype=int)
    _, phi = _symbols(cfg)
    x = cfg.grid.x
    profile_hat = np.fft.fft(cfg.sigma.modulation_profile(x))
    c = path.increments[: cfg.n_steps] @ cfg.sigma.g_array
    u0_hat = np.fft.fft(u0.values)
    out = []
    for n in steps:
        lags = n - np.arange(n)
        mild = (c[:n, None] * phi[None, :] ** lags[:, None]).sum(axis=0)
        out.append(np.fft.ifft(phi**n * u0_hat + mild * profile_hat).real)
    return Trajectory(steps, np.array(out), cfg.grid, cfg.dt)


def mean_square_linear_oracle(cfg: SolverConfig, u0: GridField) -> np.ndarray:
    """E ||u_n||_2^2 on the torus for f = a u and sigma_k = g_k u, per step

    Each Fourier mode follows E|u_{n+1}|^2 = |Phi|^2 (|1 - dt d|^2 + dt sum mu g^2) E|u_n|^2.
    """
    _require_linear(cfg, SigmaFamily.LINEAR)
    if cfg.sigma.is_x_dependent:
        raise ConfigError("the mean square oracle needs x-independent noise")
    d, phi = _symbols(cfg)
    noise = cfg.dt * float(np.sum(cfg.sigma.space.mu_array * cfg.sigma.g_array**2))
    factor = np.abs(phi) ** 2 * (np.abs(1.0 - cfg.dt * d) ** 2 + noise)
    energy = np.abs(np.fft.fft(u0.values)) ** 2
    n = np.arange(cfg.n_steps + 1)[:, None]
    per_mode = energy[None, :] * factor[None, :] ** n
    return per_mode.sum(axis=-1) * cfg.grid.dx / cfg.grid.n_x


def linear_additive_reference(
    cfg: SolverConfig, u0: GridField, path: NoisePath, eps: float = 0.0
) -> GridField:
    """Final state of the linear scheme with additive noise, solved mode by mode

    With eps = 0 this is the discrete inviscid limit: the eps = 0 scheme, which keeps
    the numerical viscosity of the Lax-Friedrichs flux. It is not the exact solution
    of the inviscid equation.
    """
    _require_linear(cfg, SigmaFamily.ADDITIVE)
    d, phi = _symbols(cfg, eps)
    amp = phi * (1.0 - cfg.dt * d)
    profile_hat = np.fft.fft(cfg.sigma.modulation_profile(cfg.grid.x))
    c = path.increments[: cfg.n_steps] @ cfg.sigma.g_array
    lags = cfg.n_steps - np.arange(cfg.n_steps)
    # the noise enters before the heat step, so it is damped lag times by phi
    # and lag - 1 times by the advection factor
    weights = (c[:, None] * phi[None, :] * amp[None, :] ** (lags[:, None] - 1)).sum(axis=0)
    u_hat = amp**cfg.n_steps * np.fft.fft(u0.values) + weights * profile_hat
    return GridField(np.fft.ifft(u_hat).real, cfg.grid, cfg.t_final)
