"""Entropy/entropy-flux pairs and entropy diagnostics for viscous solutions

For a convex S with S(0) = 0 and bounded S' the entropy flux is

    Q(u, c) = int_c^u S'(z - c) f'(z) dz,

and for a nonnegative test function and a smooth random constant V the
entropy functional is

    E int S(u0 - V) test(0) dx
      + E int int S(u - V) d_t test + Q(u, V) d_x test dx dt
      - E int int int S''(u - V) sigma(x, u, z) D_{t,z} V test dmu dx dt
      + 1/2 E int int int S''(u - V) sigma(x, u, z)^2 test dmu dx dt.

Viscous solutions satisfy it with the extra term eps E int int S(u - V) d_xx test.
All time integrals are left Riemann sums over the solver steps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Sequence

import numpy as np
import pandas as pd

from entropy_lab.grid import Grid, GridField
from entropy_lab.malliavin import SmoothRV, smooth_rv_eval
from entropy_lab.noise import sample_increments, sigma_all
from entropy_lab.util import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_MAX_WORKERS,
    ConfigError,
    InstabilityError,
    MonteCarloEstimate,
    ToleranceBudget,
    mean_ci,
    run_monte_carlo,
)
from entropy_lab.viscous_solver import FluxFamily, FluxFn, SolverConfig, iterate_steps
from entropy_lab.weights import (
    J,
    J_cdf,
    J_cdf_antiderivative,
    Mollifier,
    cutoff,
    cutoff_d1,
    cutoff_d2,
)

logger = logging.getLogger(__name__)

"""Gauss-Legendre nodes per smooth segment of an entropy flux integral"""
Q_NODES = 16

_Q_Y, _Q_W = np.polynomial.legendre.leggauss(Q_NODES)

"""Names of the per-sample terms returned by entropy_terms"""
ENTROPY_TERMS = ("initial", "transport", "malliavin", "quadratic", "viscous")

"""Frozen tolerance of the viscous entropy inequality"""
ENTROPY_BUDGET = ToleranceBudget(c_dx=0.5, c_dt=20.0, c_eps=0.1)


class EntropyKind(Enum):
    S_DELTA = "s_delta"
    S_R = "s_r"
    CUSTOM = "custom"


@dataclass(frozen=True)
class EntropyPair:
    """An entropy S paired with the flux f it is integrated against

    Attributes:
        kind: S_DELTA (smoothed |.|), S_R (truncated |.|^p) or CUSTOM
        flux: the flux f
        param: delta for S_DELTA, R for S_R
        p: the power of S_R
        custom: (S, S', S'') for CUSTOM
        breaks: points where a CUSTOM S'' is not smooth
    """

    kind: EntropyKind
    flux: FluxFn
    param: float = 0.05
    p: float = 2.0
    custom: tuple[Callable, Callable, Callable] | None = field(default=None, compare=False)
    breaks: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == EntropyKind.CUSTOM and self.custom is None:
            raise ConfigError("a custom entropy needs (S, S', S'')")
        if self.kind != EntropyKind.CUSTOM and not self.param > 0:
            raise ConfigError(f"entropy parameter must be positive, got {self.param}")
        if self.kind == EntropyKind.S_R and self.p < 2:
            raise ConfigError(f"p must be at least 2, got {self.p}")

    def __str__(self) -> str:
        if self.kind == EntropyKind.S_DELTA:
            return f"s_delta:{self.param:g}"
        if self.kind == EntropyKind.S_R:
            return f"s_r:{self.param:g}:{self.p:g}"
        return "custom"

    def S(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == EntropyKind.S_DELTA:
            return self.param * J_cdf_antiderivative(s / self.param)
        if self.kind == EntropyKind.S_R:
            R, p = self.param, self.p
            a = np.abs(s)
            return np.where(a < R, a**p, R**p + p * R ** (p - 1) * (a - R))
        return self.custom[0](s)

    def dS(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == EntropyKind.S_DELTA:
            return 2.0 * J_cdf(s / self.param) - 1.0
        if self.kind == EntropyKind.S_R:
            R, p = self.param, self.p
            return np.sign(s) * p * np.minimum(np.abs(s), R) ** (p - 1)
        return self.custom[1](s)

    def d2S(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == EntropyKind.S_DELTA:
            return 2.0 * J(s / self.param) / self.param
        if self.kind == EntropyKind.S_R:
            R, p = self.param, self.p
            a = np.abs(s)
            return np.where(a < R, p * (p - 1) * a ** (p - 2), 0.0)
        return self.custom[2](s)

    @property
    def lip(self) -> float:
        """||S||_Lip"""
        if self.kind == EntropyKind.S_DELTA:
            return 1.0
        if self.kind == EntropyKind.S_R:
            return self.p * self.param ** (self.p - 1)
        s = np.linspace(-50.0, 50.0, 20001)
        return float(np.max(np.abs(self.dS(s))))

    def kinks(self) -> tuple[float, ...]:
        """Offsets from c where S'(. - c) changes form"""
        if self.kind == EntropyKind.CUSTOM:
            return self.breaks
        return (-self.param, self.param)


def entropy_from_key(key: str, flux: FluxFn) -> EntropyPair:
    """Parse "s_delta:delta" or "s_r:R:p" """
    parts = key.strip().split(":")
    try:
        kind = EntropyKind(parts[0])
        if kind == EntropyKind.S_DELTA and len(parts) == 2:
            return EntropyPair(kind, flux, float(parts[1]))
        if kind == EntropyKind.S_R and len(parts) == 3:
            return EntropyPair(kind, flux, float(parts[1]), float(parts[2]))
        raise ValueError("wrong number of parameters")
    except (ValueError, IndexError) as e:
        raise ConfigError(f"Unable to parse entropy '{key}': {e}") from e


def _flux_kinks(flux: FluxFn) -> tuple[float, ...]:
    if flux.family == FluxFamily.BURGERS:
        return (-flux.param, flux.param)
    return ()


def q_flux(pair: EntropyPair, u, c) -> np.ndarray:
    """Q(u, c) = int_c^u S'(z - c) f'(z) dz; u and c broadcast

    The interval is split at the kinks of S' and f' and each piece is
    integrated with Gauss-Legendre, so Q(c, c) = 0 exactly.
    """
    u, c = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(c, dtype=float))
    lo, hi = np.minimum(u, c), np.maximum(u, c)
    cuts = [c + k for k in pair.kinks()] + [np.full_like(c, k) for k in _flux_kinks(pair.flux)]
    pts = np.sort(np.stack([lo, hi] + [np.clip(b, lo, hi) for b in cuts], axis=-1), axis=-1)
    a, b = pts[..., :-1, None], pts[..., 1:, None]
    half = 0.5 * (b - a)
    z = a + half * (_Q_Y + 1.0)
    integrand = pair.dS(z - c[..., None, None]) * pair.flux.f_prime(z)
    total = np.sum(half[..., 0] * np.sum(integrand * _Q_W, axis=-1), axis=-1)
    return np.sign(u - c) * total


@dataclass(frozen=True)
class Bump:
    """psi(x) = amplitude cutoff((x - center) / radius)

    Flat on |x - center| <= radius and zero past 2 radius.
    """

    center: float = 0.0
    radius: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.radius > 0 and self.amplitude >= 0):
            raise ConfigError(f"invalid bump {self}")

    def check(self, grid: Grid):
        if abs(self.center) + 2.0 * self.radius > grid.half_width:
            raise ConfigError("test function support leaves the torus")

    def _arg(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.radius

    def __call__(self, x) -> np.ndarray:
        return self.amplitude * cutoff(self._arg(x))

    def d1(self, x) -> np.ndarray:
        return self.amplitude * cutoff_d1(self._arg(x)) / self.radius

    def d2(self, x) -> np.ndarray:
        return self.amplitude * cutoff_d2(self._arg(x)) / self.radius**2


@dataclass(frozen=True)
class TestFunction:
    """test(t, x) = xi(t) psi(x), nonnegative with analytic derivatives

    xi(t) = cutoff(t / t_scale) is 1 on [0, t_scale] and vanishes past 2 t_scale;
    psi is the Bump with the given center, radius and amplitude.
    """

    __test__ = False

    t_scale: float
    center: float = 0.0
    radius: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.t_scale > 0 and self.radius > 0 and self.amplitude >= 0):
            raise ConfigError(f"invalid test function {self}")

    @property
    def bump(self) -> Bump:
        return Bump(self.center, self.radius, self.amplitude)

    @property
    def t_support(self) -> float:
        return 2.0 * self.t_scale

    def check_support(self, grid: Grid, t_final: float):
        self.bump.check(grid)
        if self.t_support >= t_final:
            raise ConfigError(f"test function support [0, {self.t_support:g}) reaches T={t_final:g}")

    def xi(self, t) -> np.ndarray:
        return cutoff(np.asarray(t, dtype=float) / self.t_scale)

    def xi_d1(self, t) -> np.ndarray:
        return cutoff_d1(np.asarray(t, dtype=float) / self.t_scale) / self.t_scale

    def psi(self, x) -> np.ndarray:
        return self.bump(x)

    def psi_d1(self, x) -> np.ndarray:
        return self.bump.d1(x)

    def psi_d2(self, x) -> np.ndarray:
        return self.bump.d2(x)

    def __call__(self, t, x) -> np.ndarray:
        return np.multiply.outer(self.xi(t), self.psi(x))


def random_trial(
    rng: np.random.Generator, cfg: SolverConfig
) -> tuple[TestFunction, SmoothRV]:
    """A random test function and V = a tanh(W(h)) + b with ||h||_H of order one"""
    L, T = cfg.grid.half_width, cfg.t_final
    radius = rng.uniform(0.5, 0.2 * L)
    center = rng.uniform(-1.0, 1.0) * (L - 2.0 * radius) * 0.5
    test = TestFunction(rng.uniform(0.1, 0.45) * T, center, radius, rng.uniform(0.5, 2.0))
    h = rng.standard_normal((cfg.n_steps, cfg.m)) / np.sqrt(T)
    a, b = rng.uniform(-1.0, 1.0, 2)
    V = SmoothRV.composed(
        lambda y: a * np.tanh(y) + b,
        lambda y: a / np.cosh(y) ** 2,
        h,
        f"{a:.2f} tanh(W(h)) + {b:.2f}",
    )
    return test, V


def _states(cfg: SolverConfig, u0: np.ndarray, inc: np.ndarray, last: int) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (n, u_n) for n = 0..last, marching the batch in inc"""
    u = np.broadcast_to(u0, inc.shape[:-2] + (cfg.grid.n_x,)).copy()
    yield 0, u
    for n, u in enumerate(iterate_steps(cfg, u, inc[..., :last, :]), start=1):
        if not np.all(np.isfinite(u)):
            raise InstabilityError(f"non-finite values at step {n}")
        yield n, u


def entropy_terms(
    cfg: SolverConfig,
    u0: GridField,
    inc: np.ndarray,
    pair: EntropyPair,
    test: TestFunction,
    Vs: Sequence[SmoothRV],
) -> np.ndarray:
    """Per-sample terms of the entropy functional for a batch of paths

    Args:
        cfg (SolverConfig): solver configuration
        u0 (GridField): initial datum
        inc (np.ndarray): increments of shape (batch, n_steps, m)
        pair (EntropyPair): the entropy pair
        test (TestFunction): nonnegative test function
        Vs: random constants evaluated on the same paths

    Returns:
        np.ndarray: shape (batch, len(Vs), 5) in the order of ENTROPY_TERMS
    """
    grid, x, dt = cfg.grid, cfg.grid.x, cfg.dt
    test.check_support(grid, cfg.t_final)
    mu = cfg.sigma.space.mu_array
    last = min(cfg.n_steps, int(np.ceil(test.t_support / dt)))
    values, derivs = zip(*(smooth_rv_eval(V, inc) for V in Vs))
    V = np.stack(values, axis=-1)[..., None]  # (batch, nV, 1)
    DV = np.stack(derivs, axis=1)  # (batch, nV, n_steps, m)
    psi, psi1, psi2 = test.psi(x), test.psi_d1(x), test.psi_d2(x)
    out = np.zeros(inc.shape[:-2] + (len(Vs), len(ENTROPY_TERMS)))
    out[..., 0] = grid.integrate(pair.S(u0.values - V) * psi)
    for n, u in _states(cfg, u0.values, inc, last):
        if n == last:
            break
        t = n * dt
        xi, xi1 = float(test.xi(t)), float(test.xi_d1(t))
        s = u[:, None, :] - V
        S = pair.S(s)
        out[..., 1] += dt * grid.integrate(S * xi1 * psi + q_flux(pair, u[:, None, :], V) * xi * psi1)
        if xi == 0.0:
            continue
        sig = sigma_all(cfg.sigma, x, u)  # (m, batch, n_x)
        d2 = pair.d2S(s)
        cross = np.einsum("kbx,bvk->bvx", sig * mu[:, None, None], DV[:, :, n, :])
        quad = np.einsum("kbx,k->bx", sig**2, mu)[:, None, :]
        out[..., 2] -= dt * xi * grid.integrate(d2 * cross * psi)
        out[..., 3] += 0.5 * dt * xi * grid.integrate(d2 * quad * psi)
        out[..., 4] += cfg.eps * dt * xi * grid.integrate(S * psi2)
    return out


def _functional_samples(cfg, u0, pair, test, Vs, n_mc, seed, max_workers, chunk_size):
    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, chunk)
        return entropy_terms(cfg, u0, inc, pair, test, Vs)

    return run_monte_carlo(sample, n_mc, max_workers, chunk_size, f"entropy {pair}")


def entropy_functional(
    cfg: SolverConfig,
    u0: GridField,
    pair: EntropyPair,
    test: TestFunction,
    V: SmoothRV,
    n_mc: int,
    seed: int = 0,
    viscous: bool = False,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> MonteCarloEstimate:
    """Monte Carlo estimate of the entropy functional of the viscous solution

    With viscous=True the eps d_xx test term is included.
    """
    terms = _functional_samples(cfg, u0, pair, test, [V], n_mc, seed, max_workers, chunk_size)
    used = terms[:, 0, :] if viscous else terms[:, 0, :4]
    return mean_ci(used.sum(axis=-1))


@dataclass(frozen=True)
class EntropyResidual:
    """The viscous entropy inequality for one (pair, test, V) draw"""

    residual: float
    se: float
    tol: float
    terms: dict

    @property
    def passed(self) -> bool:
        return self.residual >= -self.tol


def viscous_entropy_residual(
    cfg: SolverConfig,
    u0: GridField,
    pair: EntropyPair,
    test: TestFunction,
    V: SmoothRV,
    n_mc: int,
    seed: int = 0,
    budget: ToleranceBudget = ENTROPY_BUDGET,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> EntropyResidual:
    """Left side of the viscous entropy inequality, which must be >= -tol"""
    terms = _functional_samples(cfg, u0, pair, test, [V], n_mc, seed, max_workers, chunk_size)
    est = mean_ci(terms[:, 0, :].sum(axis=-1))
    tol = budget.tol(cfg.grid.dx, cfg.dt, est.se, cfg.eps, scale=test.amplitude)
    means = terms[:, 0, :].mean(axis=0)
    logger.debug("entropy residual %.3g (tol %.3g) for %s", est.mean, tol, V.name)
    return EntropyResidual(est.mean, est.se, tol, dict(zip(ENTROPY_TERMS, means)))


def continuity_in_V(
    cfg: SolverConfig,
    u0: GridField,
    pair: EntropyPair,
    test: TestFunction,
    V: SmoothRV,
    etas: Sequence[float],
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """The functional along V with directions scaled by 1 + eta, on common paths

    change is the mean paired difference to eta = 0 with its standard error.
    """
    Vs = [V] + [V.scaled(1.0 + eta) for eta in etas]
    terms = _functional_samples(cfg, u0, pair, test, Vs, n_mc, seed, max_workers, chunk_size)
    values = terms[..., :4].sum(axis=-1)
    mean, se, _, _ = mean_ci(values)
    diff_mean, diff_se, _, _ = mean_ci(values[:, 1:] - values[:, :1])
    return pd.DataFrame(
        {
            "eta": list(etas),
            "estimate": mean[1:],
            "se": se[1:],
            "change": diff_mean,
            "change_se": diff_se,
        }
    )


def initial_condition_terms(
    values: np.ndarray, u0: GridField, S: Callable, psi: GridField, lag_weights, dt: float
) -> np.ndarray:
    """sum_l J^+[l] dt int S(u_l - u0) psi for each set of lag weights

    values has shape (>= max lags, *batch, n_x); returns (*batch, len(lag_weights)).
    """
    grid = u0.grid
    span = max(len(lw) for lw in lag_weights)
    per_lag = grid.integrate(S(values[:span] - u0.values) * psi.values)
    return np.stack([np.tensordot(lw, per_lag[: len(lw)], axes=(0, 0)) * dt for lw in lag_weights], axis=-1)


def initial_condition_stat(
    cfg: SolverConfig,
    u0: GridField,
    n_mc: int,
    r0_list: Sequence[float],
    psi: GridField,
    S: Callable = np.abs,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """E int int S(u(t,x) - u0(x)) psi(x) J^+_{r0}(t) dx dt for every r0

    Returns:
        pd.DataFrame: columns r0, estimate, se, ci_lo, ci_hi
    """
    lags = []
    for r0 in r0_list:
        if r0 < cfg.dt:
            raise ValueError(f"r0={r0} is below the time step {cfg.dt}")
        lags.append(Mollifier(r0, shifted=True).lag_weights(cfg.dt))
    span = max(len(lw) for lw in lags) - 1
    if span > cfg.n_steps:
        raise ConfigError(f"2 r0 / dt = {span} exceeds n_steps = {cfg.n_steps}")
    short = cfg.with_(n_steps=span)

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, span, seed, chunk)
        states = np.stack([u for _, u in _states(short, u0.values, inc, span)])
        return initial_condition_terms(states, u0, S, psi, lags, cfg.dt)

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "initial condition")
    mean, se, lo, hi = mean_ci(samples)
    return pd.DataFrame({"r0": list(r0_list), "estimate": mean, "se": se, "ci_lo": lo, "ci_hi": hi})


def moment_entropy_balance(
    cfg: SolverConfig,
    u0: GridField,
    R: float,
    p: float,
    n_mc: int,
    seed: int = 0,
    snapshots: int = 10,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """Both sides of the truncated-power entropy balance at the snapshot times

    lhs(t) = E int S_R(u(t)) phi and
    rhs(t) = int S_R(u0) phi + E int_0^t int Q_R(u, 0) phi'
             + 1/2 S_R'' sigma^2 phi + eps S_R(u) phi'' dx ds

    Returns:
        pd.DataFrame: columns t, lhs, rhs, se (of rhs - lhs), slack = rhs - lhs
    """
    pair = EntropyPair(EntropyKind.S_R, cfg.flux, R, p)
    grid, x, dt, w = cfg.grid, cfg.grid.x, cfg.dt, cfg.weight
    phi, dphi, d2phi = w(x), w.gradient(x), w.laplacian(x)
    mu = cfg.sigma.space.mu_array
    steps = np.unique(np.rint(np.linspace(0, cfg.n_steps, snapshots + 1)).astype(int))
    start = float(grid.integrate(pair.S(u0.values) * phi))

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, chunk)
        out = np.zeros((len(chunk), len(steps), 2))
        running = np.zeros(len(chunk))
        slot = 0
        for n, u in _states(cfg, u0.values, inc, cfg.n_steps):
            if n == steps[slot]:
                out[:, slot, 0] = grid.integrate(pair.S(u) * phi)
                out[:, slot, 1] = start + running
                slot += 1
                if slot == len(steps):
                    break
            sig2 = np.einsum("kbx,k->bx", sigma_all(cfg.sigma, x, u) ** 2, mu)
            running += dt * grid.integrate(
                q_flux(pair, u, 0.0) * dphi
                + 0.5 * pair.d2S(u) * sig2 * phi
                + cfg.eps * pair.S(u) * d2phi
            )
        return out

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "S_R balance")
    slack = samples[..., 1] - samples[..., 0]
    _, se, _, _ = mean_ci(slack)
    return pd.DataFrame(
        {
            "t": steps * dt,
            "lhs": samples[..., 0].mean(axis=0),
            "rhs": samples[..., 1].mean(axis=0),
            "se": se,
            "slack": slack.mean(axis=0),
        }
    )
