"""Uniqueness diagnostics: doubling of variables, Kato, L^1 contraction and fractional BV

The entropy solution of every comparison is represented by a reference
viscous solution v at the smaller viscosity eps' = eps / 4, driven by the
same noise as u = u^eps. Spatial double integrals over (x, y) use the grid
lags y = x - j dx, so that (x + y) / 2 and (x - y) / 2 stay on a half grid.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from entropy_lab.entropy import Bump, EntropyKind, EntropyPair, q_flux
from entropy_lab.grid import Grid, GridField
from entropy_lab.malliavin import tangent_march
from entropy_lab.noise import sample_increments, sample_path, sigma_all, stack_increments
from entropy_lab.util import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_MAX_WORKERS,
    ConfigError,
    MonteCarloEstimate,
    SweepFit,
    ToleranceBudget,
    fit_linear,
    fit_loglog_slope,
    mean_ci,
    run_monte_carlo,
)
from entropy_lab.viscous_solver import (
    FluxFamily,
    SolverConfig,
    linear_additive_reference,
    moment_growth_bound,
    snapshot_schedule,
    solve_batch,
)
from entropy_lab.weights import J, J_cdf, Mollifier

logger = logging.getLogger(__name__)

"""Viscosity of the reference solution relative to the probe"""
REFERENCE_EPS_RATIO = 0.25

DOUBLING_TERMS = ("L", "R", "F", "T1", "T2", "T3", "T3_ref")

"""Frozen tolerance of the doubling inequality"""
DOUBLING_BUDGET = ToleranceBudget(c_dx=0.5, c_dt=20.0, c_eps=0.1)

"""Frozen tolerance of the Kato inequality"""
KATO_BUDGET = ToleranceBudget(c_dx=0.5, c_dt=5.0)

"""Frozen tolerance of the L^1 contraction curves, c_dx dx + c_dt sqrt(dt) t + 3 se"""
CONTRACTION_BUDGET = ToleranceBudget(c_dx=0.05, c_dt=0.5)


@dataclass(frozen=True)
class DoublingParams:
    """Radii of the doubling test function

    test(t, x, s, y) = 1/2 psi((x + y) / 2) J_r((x - y) / 2) xi(t) J^+_{r0}(t - s)
    with the time cutoff xi(t) = 1 - int_0^t J^+_gamma(s - t0) ds.

    Attributes:
        r: spatial mollifier radius
        r0: time mollifier radius
        delta: smoothing of the entropy S_delta
        gamma: radius of the time cutoff
        t0: evaluation time
        psi: nonnegative spatial bump
    """

    r: float
    r0: float
    delta: float
    gamma: float
    t0: float
    psi: Bump = field(default_factory=Bump)

    def __post_init__(self):
        if min(self.r, self.r0, self.delta, self.gamma) <= 0:
            raise ConfigError(f"doubling radii must be positive: {self}")
        if not 2.0 * self.r0 < self.t0:
            raise ConfigError(f"need 2 r0 < t0, got r0={self.r0:g}, t0={self.t0:g}")

    @classmethod
    def coupled(cls, r: float, eta: float, **kwargs) -> DoublingParams:
        """delta = r^(1 + eta)"""
        return cls(r=r, delta=r ** (1.0 + eta), **kwargs)

    def check(self, cfg: SolverConfig):
        T = cfg.t_final
        if not self.gamma < 0.5 * (T - self.t0):
            raise ConfigError(f"need gamma < (T - t0) / 2, got gamma={self.gamma:g}, t0={self.t0:g}, T={T:g}")
        if self.r0 < cfg.dt:
            raise ValueError(f"r0={self.r0} is below the time step {cfg.dt}")
        self.psi.check(cfg.grid)

    def xi(self, t) -> np.ndarray:
        return 1.0 - J_cdf((np.asarray(t, dtype=float) - self.t0 - self.gamma) / self.gamma)

    def xi_d1(self, t) -> np.ndarray:
        return -J((np.asarray(t, dtype=float) - self.t0 - self.gamma) / self.gamma) / self.gamma


@dataclass(frozen=True, eq=False)
class PairKernel:
    """1/2 psi((x + y) / 2) J_r((x - y) / 2) and its derivatives on grid lags

    Every array has shape (n_lags, n_x), and sum_j sum_i dx K[j, i] g(x_i, x_i - lags[j] dx)
    approximates the double integral of g against K.
    """

    lags: np.ndarray
    value: np.ndarray
    d_x: np.ndarray
    d_y: np.ndarray
    d_xx: np.ndarray
    d_yy: np.ndarray


def pair_kernel(grid: Grid, r: float, psi: Bump) -> PairKernel:
    if r < 2.0 * grid.dx:
        raise ValueError(f"r={r} is below two cells ({2.0 * grid.dx:g})")
    n = int(np.ceil(2.0 * r / grid.dx))
    lags = np.arange(-n, n + 1)
    h = 0.5 * grid.dx * lags
    J_r = Mollifier(r)
    # unit discrete mass
    mass = np.sum(J_r(h))
    w0, w1, w2 = (
        (v / mass)[:, None] for v in (J_r(h), J_r.derivative(h), J_r.second_derivative(h))
    )
    mid = grid.x[None, :] - h[:, None]
    p0, p1, p2 = psi(mid), psi.d1(mid), psi.d2(mid)
    return PairKernel(
        lags,
        p0 * w0,
        0.5 * (p1 * w0 + p0 * w1),
        0.5 * (p1 * w0 - p0 * w1),
        0.25 * p2 * w0 + 0.5 * p1 * w1 + 0.25 * p0 * w2,
        0.25 * p2 * w0 - 0.5 * p1 * w1 + 0.25 * p0 * w2,
    )


def _lagged_entropy(kernel: PairKernel, grid: Grid, pair: EntropyPair, u, v) -> np.ndarray:
    total = 0.0
    for row, lag in enumerate(kernel.lags):
        total = total + grid.integrate(pair.S(np.roll(v, lag, axis=-1) - u) * kernel.value[row])
    return total


def _lagged_integrals(
    kernel: PairKernel,
    grid: Grid,
    pair: EntropyPair,
    mu: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    sig_u: np.ndarray,
    sig_v: np.ndarray,
    D: np.ndarray | None,
) -> np.ndarray:
    """Spatial integrals of one (t, s) pair, shape (*batch, 6)

    Columns: S A, Q dA, S'' |sigma_y - sigma_x|^2 A, S'' (D u - sigma_x) sigma_y A,
    S d_xx A and S d_yy A, with u = u(t, x) and v = v(s, y).
    """
    out = np.zeros(u.shape[:-1] + (6,))
    for row, lag in enumerate(kernel.lags):
        vy = np.roll(v, lag, axis=-1)
        sy = np.roll(sig_v, lag, axis=-1)
        S = pair.S(vy - u)
        d2 = pair.d2S(vy - u)
        value = kernel.value[row]
        out[..., 0] += grid.integrate(S * value)
        out[..., 1] += grid.integrate(
            q_flux(pair, u, vy) * kernel.d_x[row] + q_flux(pair, vy, u) * kernel.d_y[row]
        )
        out[..., 2] += grid.integrate(d2 * np.einsum("k,k...->...", mu, (sy - sig_u) ** 2) * value)
        if D is not None:
            out[..., 3] += grid.integrate(d2 * np.einsum("k,k...->...", mu, (D - sig_u) * sy) * value)
        out[..., 4] += grid.integrate(S * kernel.d_xx[row])
        out[..., 5] += grid.integrate(S * kernel.d_yy[row])
    return out


@dataclass(frozen=True)
class DoublingResult:
    """The doubling inequality L >= R + F + T1 + T2 + T3 + T3_ref

    Attributes:
        terms: estimate, se, ci_lo and ci_hi per term
        gap: L minus the right side, per sample
        tol: the frozen tolerance
    """

    terms: pd.DataFrame
    gap: MonteCarloEstimate
    tol: float

    @property
    def passed(self) -> bool:
        return self.gap.mean >= -self.tol

    def estimate(self, name: str) -> float:
        return float(self.terms.loc[name, "estimate"])


def doubling_terms(
    cfg: SolverConfig,
    u0: GridField,
    v0: GridField,
    params: DoublingParams,
    n_mc: int,
    seed: int = 0,
    eps_ref: float | None = None,
    tangents: bool = True,
    budget: ToleranceBudget = DOUBLING_BUDGET,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> DoublingResult:
    """Monte Carlo estimates of every term of the doubling inequality

    u solves cfg from u0 and v solves cfg with eps_ref (eps / 4 by default)
    from v0, both on the same paths. T2 needs the Malliavin derivative of u
    for every birth step; with tangents=False it is reported as NaN and left
    out of the gap.

    Args:
        cfg (SolverConfig): configuration of u
        u0 (GridField): initial datum of u
        v0 (GridField): initial datum of v
        params (DoublingParams): radii of the test function
        n_mc (int): number of paths
        seed (int): base seed

    Returns:
        DoublingResult: terms, gap and tolerance
    """
    params.check(cfg)
    eps_ref = REFERENCE_EPS_RATIO * cfg.eps if eps_ref is None else eps_ref
    grid, dt = cfg.grid, cfg.dt
    kernel = pair_kernel(grid, params.r, params.psi)
    lw = Mollifier(params.r0, shifted=True).lag_weights(dt)
    span = len(lw) - 1
    last = int(np.ceil((params.t0 + 2.0 * params.gamma) / dt - 1e-9))
    short = cfg.with_(n_steps=last)
    ref = short.with_(eps=eps_ref)
    pair = EntropyPair(EntropyKind.S_DELTA, cfg.flux, params.delta)
    times = np.arange(last + 1) * dt
    xi, xi1 = params.xi(times), params.xi_d1(times)
    mu = cfg.sigma.space.mu_array

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, dt, last, seed, chunk)
        U = solve_batch(short, u0, inc, store_all=True, streams=list(chunk)).values
        V = solve_batch(ref, v0, inc, store_all=True, streams=list(chunk)).values
        sig_u = sigma_all(cfg.sigma, grid.x, U)
        sig_v = sigma_all(cfg.sigma, grid.x, V)
        out = np.zeros((len(chunk), len(DOUBLING_TERMS)))
        for n in range(1, min(span, last - 1) + 1):
            out[:, 0] += dt * lw[n] * xi[n] * _lagged_entropy(kernel, grid, pair, U[n], V[0])
        for j in range(last - 1):
            top = min(j + span, last - 1)
            D = None
            if tangents:
                D = np.stack(
                    [tangent_march(short, U, inc, j, sig_u[k, j], top) for k in range(cfg.m)]
                )
            for n in range(j + 1, top + 1):
                if xi[n] == 0.0 and xi1[n] == 0.0:
                    continue
                tau = dt * dt * lw[n - j]
                parts = _lagged_integrals(
                    kernel, grid, pair, mu, U[n], V[j], sig_u[:, n], sig_v[:, j],
                    None if D is None else D[:, n - j],
                )
                out[:, 1] -= tau * xi1[n] * parts[:, 0]
                out[:, 2] -= tau * xi[n] * parts[:, 1]
                out[:, 3] -= 0.5 * tau * xi[n] * parts[:, 2]
                out[:, 4] += tau * xi[n] * parts[:, 3]
                out[:, 5] -= cfg.eps * tau * xi[n] * parts[:, 4]
                out[:, 6] -= eps_ref * tau * xi[n] * parts[:, 5]
        if not tangents:
            out[:, 4] = np.nan
        return out

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "doubling")
    mean, se, lo, hi = mean_ci(samples)
    terms = pd.DataFrame(
        {"estimate": mean, "se": se, "ci_lo": lo, "ci_hi": hi}, index=list(DOUBLING_TERMS)
    )
    gap = mean_ci(samples[:, 0] - np.nansum(samples[:, 1:], axis=1))
    tol = budget.tol(grid.dx, dt, gap.se, cfg.eps, scale=params.psi.amplitude)
    logger.info(
        "doubling gap %.4g (tol %.3g) at r=%g, r0=%g, delta=%g",
        gap.mean, tol, params.r, params.r0, params.delta,
    )
    return DoublingResult(terms, gap, tol)


def t1_envelope_study(
    cfg: SolverConfig,
    u0: GridField,
    v0: GridField,
    base: DoublingParams,
    r_list: Sequence[float],
    eta: float,
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> SweepFit:
    """T1 along delta = r^(1 + eta) against the envelope r^(2e) / delta + delta

    e = kappa + 1/2 is the Holder exponent of sigma in x. For x-independent
    sigma only the delta part of the envelope remains.
    """
    e = cfg.sigma.holder_exponent
    if cfg.sigma.is_x_dependent and not 0 < eta < 2.0 * e - 1.0:
        raise ConfigError(f"need 0 < eta < {2.0 * e - 1.0:g}, got {eta}")
    rows = []
    for r in r_list:
        params = replace(base, r=r, delta=r ** (1.0 + eta))
        res = doubling_terms(cfg, u0, v0, params, n_mc, seed, tangents=False,
                             max_workers=max_workers, chunk_size=chunk_size)
        envelope = params.delta + (r ** (2.0 * e) / params.delta if cfg.sigma.is_x_dependent else 0.0)
        rows.append((r, params.delta, res.estimate("T1"), float(res.terms.loc["T1", "se"]), envelope))
    table = pd.DataFrame(rows, columns=["r", "delta", "T1", "se", "envelope"])
    slope, r2 = fit_loglog_slope(table["r"], table["T1"])
    theory = 1.0 + eta
    if cfg.sigma.is_x_dependent:
        theory = min(theory, 2.0 * e - 1.0 - eta)
    return SweepFit(table, slope, r2, theory)


def t2_trend_study(
    cfg: SolverConfig,
    u0: GridField,
    v0: GridField,
    base: DoublingParams,
    r0_list: Sequence[float],
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """T2 as the time mollifier shrinks; it vanishes in the limit r0 -> 0"""
    rows = []
    for r0 in r0_list:
        res = doubling_terms(cfg, u0, v0, replace(base, r0=r0), n_mc, seed,
                             max_workers=max_workers, chunk_size=chunk_size)
        t2 = res.terms.loc["T2"]
        rows.append((r0, t2["estimate"], t2["se"], t2["ci_lo"], t2["ci_hi"]))
    return pd.DataFrame(rows, columns=["r0", "T2", "se", "ci_lo", "ci_hi"])


def t3_epsilon_study(
    cfg: SolverConfig,
    u0: GridField,
    v0: GridField,
    base: DoublingParams,
    eps_list: Sequence[float],
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> SweepFit:
    """T3 across viscosities with a straight-line fit in eps"""
    rows = []
    for eps in eps_list:
        res = doubling_terms(cfg.with_(eps=eps), u0, v0, base, n_mc, seed, tangents=False,
                             max_workers=max_workers, chunk_size=chunk_size)
        rows.append((eps, res.estimate("T3"), float(res.terms.loc["T3", "se"])))
    table = pd.DataFrame(rows, columns=["eps", "T3", "se"])
    slope, r2 = fit_linear(table["eps"], table["T3"])
    return SweepFit(table, slope, r2)


@dataclass(frozen=True)
class KatoResult:
    """Both sides of the Kato inequality at t0

    lhs = E int |u(t0) - v(t0)| psi and rhs is the initial distance plus the
    flux term and the viscous term eps E int int |u - v| psi''.
    """

    lhs: float
    rhs: float
    se: float
    tol: float
    terms: dict

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.tol


def kato_check(
    cfg: SolverConfig,
    u0: GridField,
    v0: GridField,
    psi: Bump,
    t0: float,
    n_mc: int,
    seed: int = 0,
    budget: ToleranceBudget = KATO_BUDGET,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> KatoResult:
    """Compare two viscous solutions on coupled paths through the Kato inequality

    Args:
        cfg (SolverConfig): shared configuration
        u0 (GridField): first initial datum
        v0 (GridField): second initial datum
        psi (Bump): nonnegative test bump
        t0 (float): evaluation time, a multiple of dt
        n_mc (int): number of paths

    Returns:
        KatoResult: both sides, tolerance and the rhs terms
    """
    psi.check(cfg.grid)
    grid, dt = cfg.grid, cfg.dt
    n0 = int(round(t0 / dt))
    if abs(n0 * dt - t0) > 1e-9 * max(1.0, t0) or not 1 <= n0 <= cfg.n_steps:
        raise ConfigError(f"t0={t0} is not a step time in (0, {cfg.t_final:g}]")
    short = cfg.with_(n_steps=n0)
    x = grid.x
    p0, p1, p2 = psi(x), psi.d1(x), psi.d2(x)
    initial = float(grid.integrate(np.abs(u0.values - v0.values) * p0))
    f = cfg.flux.f

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, dt, n0, seed, chunk)
        U = solve_batch(short, u0, inc, store_all=True, streams=list(chunk)).values
        V = solve_batch(short, v0, inc, store_all=True, streams=list(chunk)).values
        diff = U - V
        lhs = grid.integrate(np.abs(diff[-1]) * p0)
        flux = dt * grid.integrate(np.sign(diff[:-1]) * (f(U[:-1]) - f(V[:-1])) * p1).sum(axis=0)
        viscous = cfg.eps * dt * grid.integrate(np.abs(diff[:-1]) * p2).sum(axis=0)
        return np.stack([lhs, flux, viscous], axis=-1)

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "kato")
    means = samples.mean(axis=0)
    gap = mean_ci(samples[:, 0] - samples[:, 1] - samples[:, 2] - initial)
    tol = budget.tol(grid.dx, dt, gap.se, scale=psi.amplitude)
    rhs = initial + float(means[1] + means[2])
    logger.info("kato lhs %.4g rhs %.4g (tol %.3g)", means[0], rhs, tol)
    terms = {"initial": initial, "flux": float(means[1]), "viscous": float(means[2])}
    return KatoResult(float(means[0]), rhs, gap.se, tol, terms)


def l1_contraction_curve(
    cfg: SolverConfig,
    u0: GridField,
    v0: GridField,
    n_mc: int,
    seed: int = 0,
    snapshots: int = 10,
    budget: ToleranceBudget = CONTRACTION_BUDGET,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """E ||u(t) - v(t)|| on coupled paths at the snapshot times

    weighted is the L^1(phi) distance, flat the distance on the torus and
    adjusted = exp(-C t) weighted with C = moment_growth_bound(cfg); flat and
    adjusted are nonincreasing in exact arithmetic.

    Returns:
        pd.DataFrame: t, weighted, weighted_se, flat, flat_se, adjusted, adjusted_se, tol
    """
    grid = cfg.grid
    steps = snapshot_schedule(cfg.n_steps, snapshots)
    phi = cfg.weight(grid.x)

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, chunk)
        U = solve_batch(cfg, u0, inc, snapshot_steps=steps, streams=list(chunk)).values
        V = solve_batch(cfg, v0, inc, snapshot_steps=steps, streams=list(chunk)).values
        gap = np.abs(U - V)
        out = np.stack([grid.integrate(gap * phi), grid.integrate(gap)], axis=-1)
        return np.moveaxis(out, 1, 0)

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "L1 contraction")
    mean, se, _, _ = mean_ci(samples)
    times = steps * cfg.dt
    decay = np.exp(-moment_growth_bound(cfg) * times)
    worst = np.maximum(np.maximum(se[:, 0] * decay, se[:, 1]), 0.0)
    return pd.DataFrame(
        {
            "t": times,
            "weighted": mean[:, 0],
            "weighted_se": se[:, 0],
            "flat": mean[:, 1],
            "flat_se": se[:, 1],
            "adjusted": mean[:, 0] * decay,
            "adjusted_se": se[:, 0] * decay,
            # sqrt(dt) t stands in for dt in the budget
            "tol": budget.tol(grid.dx, np.sqrt(cfg.dt) * times, worst),
        }
    )


def contraction_violations(table: pd.DataFrame, column: str = "adjusted") -> int:
    """Snapshots at which column grows by more than the tolerance"""
    growth = np.diff(table[column].to_numpy())
    return int(np.sum(growth > table["tol"].to_numpy()[1:]))


def _shift_kernel(grid: Grid, r: float) -> tuple[np.ndarray, np.ndarray]:
    if r < 2.0 * grid.dx:
        raise ValueError(f"r={r} is below two cells ({2.0 * grid.dx:g})")
    n = int(np.ceil(r / grid.dx))
    lags = np.arange(-n, n + 1)
    w = Mollifier(r)(lags * grid.dx)
    return lags, w / w.sum()


def translation_modulus(
    values: np.ndarray, grid: Grid, phi: np.ndarray, lags: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """sum_j w_j int |u(x + z_j) - u(x - z_j)| phi dx with z_j = lags[j] dx"""
    total = 0.0
    for lag, wj in zip(lags, w):
        shifted = np.roll(values, -lag, axis=-1) - np.roll(values, lag, axis=-1)
        total = total + wj * grid.integrate(np.abs(shifted) * phi)
    return total


def fractional_bv_modulus(
    cfg: SolverConfig,
    u0: GridField,
    n_mc: int,
    r_list: Sequence[float],
    seed: int = 0,
    snapshots: int = 10,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """E int int |u(t, x + z) - u(t, x - z)| phi(x) J_r(z) dx dz per r and t

    Returns:
        pd.DataFrame: t, r, modulus, se
    """
    grid = cfg.grid
    kernels = [_shift_kernel(grid, r) for r in r_list]
    steps = snapshot_schedule(cfg.n_steps, snapshots)
    phi = cfg.weight(grid.x)

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, chunk)
        values = solve_batch(cfg, u0, inc, snapshot_steps=steps, streams=list(chunk)).values
        out = np.stack([translation_modulus(values, grid, phi, *k) for k in kernels], axis=-1)
        return np.moveaxis(out, 1, 0)

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "fractional BV")
    mean, se, _, _ = mean_ci(samples)
    return pd.DataFrame(
        {
            "t": np.repeat(steps * cfg.dt, len(r_list)),
            "r": np.tile(np.asarray(r_list, dtype=float), len(steps)),
            "modulus": mean.ravel(),
            "se": se.ravel(),
        }
    )


def fractional_bv_excess(cfg: SolverConfig, table: pd.DataFrame) -> SweepFit:
    """Final modulus minus C times the initial one, C = exp(C_growth T) frozen

    The excess is O(r^kappa). Rows whose excess exceeds 3 SE are flagged significant, and the
    slope is fitted on those rows only when there are at least two of them.
    """
    T = table["t"].max()
    initial = table[table["t"] == 0].sort_values("r")
    final = table[table["t"] == T].sort_values("r")
    C = float(np.exp(moment_growth_bound(cfg) * T))
    excess = final["modulus"].to_numpy() - C * initial["modulus"].to_numpy()
    se = final["se"].to_numpy()
    out = pd.DataFrame(
        {
            "r": final["r"].to_numpy(),
            "initial": initial["modulus"].to_numpy(),
            "final": final["modulus"].to_numpy(),
            "se": se,
            "excess": excess,
            "significant": excess > 3.0 * se,
        }
    )
    slope, r2 = np.nan, np.nan
    fitted = out[out["significant"]]
    if len(fitted) > 1:
        slope, r2 = fit_loglog_slope(fitted["r"], fitted["excess"])
    return SweepFit(out, slope, r2, cfg.sigma.kappa, one_sided=True)


def epsilon_convergence_study(
    cfg: SolverConfig,
    eps_list: Sequence[float],
    u0: GridField,
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> pd.DataFrame:
    """Pairwise E ||u^eps_i(T) - u^eps_j(T)||_{1,phi} on shared paths"""
    columns = ["eps_i", "eps_j", "distance", "se", "ci_lo", "ci_hi"]
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        return pd.DataFrame(columns=columns)
    grid = cfg.grid
    cfgs = [cfg.with_(eps=e) for e in eps_list]
    pairs = list(itertools.combinations(range(len(eps_list)), 2))
    phi = cfg.weight(grid.x)

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, chunk)
        finals = [solve_batch(c, u0, inc, streams=list(chunk)).values[-1] for c in cfgs]
        return np.stack(
            [grid.integrate(np.abs(finals[i] - finals[j]) * phi) for i, j in pairs], axis=-1
        )

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "eps Cauchy")
    mean, se, lo, hi = mean_ci(samples)
    return pd.DataFrame(
        {
            "eps_i": [eps_list[i] for i, _ in pairs],
            "eps_j": [eps_list[j] for _, j in pairs],
            "distance": mean,
            "se": se,
            "ci_lo": lo,
            "ci_hi": hi,
        },
        columns=columns,
    )


def consecutive_distances(table: pd.DataFrame) -> pd.DataFrame:
    """Rows of a Cauchy table comparing neighbours in the eps list"""
    eps = list(dict.fromkeys(list(table["eps_i"]) + list(table["eps_j"])))
    neighbours = set(zip(eps[:-1], eps[1:]))
    keep = [(a, b) in neighbours for a, b in zip(table["eps_i"], table["eps_j"])]
    return table[keep].reset_index(drop=True)


def epsilon_reference_distance(
    cfg: SolverConfig,
    eps_list: Sequence[float],
    u0: GridField,
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> SweepFit:
    """E ||u^eps(T) - u^0(T)||_{1,phi} against the discrete inviscid limit

    u^0 is the eps = 0 scheme in closed form (linear_additive_reference), so the
    distance measures the viscous error at fixed dx and dt.
    """
    if cfg.flux.family not in (FluxFamily.ZERO, FluxFamily.LINEAR) or not cfg.sigma.is_additive:
        raise ConfigError("the inviscid reference needs a linear flux and additive noise")
    grid = cfg.grid
    phi = cfg.weight(grid.x)

    def sample(chunk: range) -> np.ndarray:
        paths = [sample_path(cfg.sigma.space, cfg.dt, cfg.n_steps, seed, s) for s in chunk]
        ref = np.stack([linear_additive_reference(cfg, u0, p).values for p in paths])
        inc = stack_increments(paths)
        return np.stack(
            [
                grid.integrate(np.abs(solve_batch(cfg.with_(eps=e), u0, inc).values[-1] - ref) * phi)
                for e in eps_list
            ],
            axis=-1,
        )

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "eps reference")
    mean, se, _, _ = mean_ci(samples)
    table = pd.DataFrame({"eps": list(eps_list), "distance": mean, "se": se})
    slope, r2 = fit_loglog_slope(table["eps"], table["distance"]) if len(table) > 1 else (np.nan, np.nan)
    return SweepFit(table, slope, r2, theory=1.0)
