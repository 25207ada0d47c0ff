"""Monte Carlo checks of the Ito formula with an anticipating parameter

For X(t) = x0 + int int u(s, z) W(dz, ds) + int v(s) ds and a smooth random
variable V,

    F(X(t), V, t) = F(x0, V, 0) + int d3F ds + delta(d1F u) + int d1F v ds
                    + int int d12F D_{s,z}V u dmu ds + 1/2 int int d11F u^2 dmu ds.

The Skorohod integral delta(d1F u) is not simulated. Its expectation is zero,
so the right side is checked in mean, and the implied value
delta = F(X(t), V, t) - (all other terms) is checked through its pairing
E[delta V'] = E<d1F u, DV'>_H with a second smooth random variable V'.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from entropy_lab.malliavin import SmoothRV, h_inner, smooth_rv_eval
from entropy_lab.noise import NoiseSpace, sample_increments
from entropy_lab.util import (
    DEFAULT_CHUNK_SIZE,
    DEFAULT_MAX_WORKERS,
    ConfigError,
    MonteCarloEstimate,
    RegimeWarning,
    SweepFit,
    ToleranceBudget,
    fit_loglog_slope,
    mean_ci,
    run_monte_carlo,
)

logger = logging.getLogger(__name__)

ITO_TERMS = ("lhs", "initial", "time", "drift", "quadratic", "cross")

"""The residual carries a first order weak bias in dt"""
ITO_BUDGET = ToleranceBudget(c_dx=0.0, c_dt=2.0)

ITO_CASES = ("identity", "product", "square", "anticipating")


@dataclass(frozen=True)
class ToyProcess:
    """A scalar Ito process with u(s, z_k) = amplitudes[k] * shape(s, X(s))

    Attributes:
        x0: initial value
        amplitudes: a_k per noise node
        shape: bounded adapted factor of the integrand, callable (s, x)
        drift: adapted drift v, callable (s, x)
        name: label used in reports
    """

    x0: float
    amplitudes: tuple[float, ...]
    shape: Callable[[np.ndarray, np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "X"

    def __post_init__(self):
        if not np.isfinite(self.x0):
            raise ConfigError(f"x0 must be finite, got {self.x0}")

    def u(self, s, x) -> np.ndarray:
        factor = self.shape(s, x) * np.ones(np.broadcast(s, x).shape)
        return factor[..., None] * np.asarray(self.amplitudes, dtype=float)

    def v(self, s, x) -> np.ndarray:
        return self.drift(s, x) * np.ones(np.broadcast(s, x).shape)

    def march(self, increments: np.ndarray, dt: float) -> np.ndarray:
        """Euler path of shape (*batch, n_steps + 1) for increments (*batch, n_steps, m)"""
        if increments.shape[-1] != len(self.amplitudes):
            raise ConfigError(f"{len(self.amplitudes)} amplitudes for {increments.shape[-1]} nodes")
        n_steps = increments.shape[-2]
        X = np.empty(increments.shape[:-2] + (n_steps + 1,))
        X[..., 0] = self.x0
        for n in range(n_steps):
            s, x = n * dt, X[..., n]
            X[..., n + 1] = (
                x + np.einsum("...k,...k->...", self.u(s, x), increments[..., n, :]) + self.v(s, x) * dt
            )
        return X


@dataclass(frozen=True)
class ItoFunction:
    """F(zeta, lambda, t) with the partial derivatives the formula uses"""

    f: Callable
    d1: Callable
    d3: Callable
    d11: Callable
    d12: Callable
    name: str = "F"


def growth_violations(F: ItoFunction, t_final: float = 1.0, radii=(10.0, 1000.0)) -> list[str]:
    """Partials of F that outgrow their bounds on a widening box

    F and d3F may grow linearly in (zeta, lambda); d1F, d11F and d12F must stay bounded.
    """
    grow = {}
    for radius in radii:
        z = np.linspace(-radius, radius, 41)
        zeta, lam, t = np.meshgrid(z, z, np.linspace(0.0, t_final, 5), indexing="ij")
        linear = 1.0 + np.abs(zeta) + np.abs(lam)
        for name, fn, scale in (
            ("F", F.f, linear),
            ("d3F", F.d3, linear),
            ("d1F", F.d1, 1.0),
            ("d11F", F.d11, 1.0),
            ("d12F", F.d12, 1.0),
        ):
            value = np.abs(fn(zeta, lam, t) * np.ones_like(zeta)) / scale
            grow.setdefault(name, []).append(float(np.max(value)))
    return [name for name, (small, large) in grow.items() if large > 2.0 * small + 1e-12]


def _ito_terms(
    proc: ToyProcess,
    F: ItoFunction,
    V: SmoothRV,
    increments: np.ndarray,
    dt: float,
    mu: np.ndarray,
    V_other: SmoothRV | None = None,
) -> np.ndarray:
    """Per-sample terms of the formula, shape (batch, 6), or (batch, 8) with a pairing"""
    n_steps = increments.shape[-2]
    X = proc.march(increments, dt)
    lam, DV = smooth_rv_eval(V, increments)
    s = np.arange(n_steps) * dt
    Xn, L = X[:, :-1], lam[:, None]
    U = proc.u(s, Xn)
    d1 = F.d1(Xn, L, s)
    out = [
        F.f(X[:, -1], lam, n_steps * dt) * np.ones_like(lam),
        F.f(proc.x0, lam, 0.0) * np.ones_like(lam),
        dt * np.sum(F.d3(Xn, L, s) * np.ones_like(Xn), axis=-1),
        dt * np.sum(d1 * proc.v(s, Xn), axis=-1),
        0.5 * dt * np.sum(F.d11(Xn, L, s) * np.einsum("k,bnk->bn", mu, U**2), axis=-1),
        dt * np.sum(F.d12(Xn, L, s) * np.einsum("k,bnk->bn", mu, DV * U), axis=-1),
    ]
    if V_other is not None:
        other, D_other = smooth_rv_eval(V_other, increments)
        out.append(other * np.ones_like(lam))
        out.append(h_inner((d1 * np.ones_like(Xn))[..., None] * U, D_other, dt, mu))
    return np.stack(out, axis=-1)


def _implied_skorohod(terms: np.ndarray) -> np.ndarray:
    return terms[:, 0] - terms[:, 1:6].sum(axis=1)


@dataclass(frozen=True)
class ItoResult:
    """Both sides of the formula in mean

    Attributes:
        case: label of the (process, F, V) triple
        lhs: E F(X(t), V, t)
        rhs: the right side with the Skorohod term in mean
        residual: E[lhs - rhs]
        terms: mean of every term
        tol: the frozen tolerance
        oracle: closed-form E F(X(t), V, t), if known
        violations: growth bounds F breaks
    """

    case: str
    lhs: MonteCarloEstimate
    rhs: float
    residual: MonteCarloEstimate
    terms: dict
    tol: float
    oracle: float | None = None
    violations: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return abs(self.residual.mean) <= self.tol

    @property
    def oracle_consistent(self) -> bool:
        if self.oracle is None:
            return True
        return abs(self.lhs.mean - self.oracle) <= 3.0 * self.lhs.se + 1e-12


def verify_anticipating_ito(
    proc: ToyProcess,
    F: ItoFunction,
    V: SmoothRV,
    space: NoiseSpace,
    dt: float,
    n_steps: int,
    n_mc: int,
    seed: int = 0,
    oracle: float | None = None,
    case: str | None = None,
    budget: ToleranceBudget = ITO_BUDGET,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> ItoResult:
    """Monte Carlo of both sides of the anticipating Ito formula

    Args:
        proc (ToyProcess): the Ito process X
        F (ItoFunction): F with its partial derivatives
        V (SmoothRV): the anticipating parameter, defined on n_steps steps
        space (NoiseSpace): the noise nodes
        dt (float): time step
        n_steps (int): number of steps, t = n_steps * dt
        n_mc (int): number of paths

    Returns:
        ItoResult: residual and the per-term means
    """
    if V.directions.shape[1] not in (0, n_steps):
        raise ConfigError(f"V lives on {V.directions.shape[1]} steps, not {n_steps}")
    violations = growth_violations(F, n_steps * dt)
    if violations:
        warnings.warn(f"{F.name} breaks the growth bounds of {violations}", RegimeWarning)
    mu = space.mu_array

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(space, dt, n_steps, seed, chunk)
        return _ito_terms(proc, F, V, inc, dt, mu)

    terms = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "ito")
    means = terms.mean(axis=0)
    residual = mean_ci(_implied_skorohod(terms))
    tol = budget.tol(0.0, dt, residual.se)
    label = case or f"{F.name}({proc.name}, {V.name})"
    logger.info("ito %s residual %.3g (tol %.3g)", label, residual.mean, tol)
    return ItoResult(
        label,
        mean_ci(terms[:, 0]),
        float(means[1:].sum()),
        residual,
        dict(zip(ITO_TERMS, means.tolist())),
        tol,
        oracle,
        tuple(violations),
    )


@dataclass(frozen=True)
class PairingResult:
    """E[delta V'] against E<G, DV'>_H for the implied Skorohod integral delta of G = d1F u"""

    pairing: float
    inner: float
    diff: MonteCarloEstimate
    tol: float

    @property
    def passed(self) -> bool:
        return abs(self.diff.mean) <= self.tol


def skorohod_pairing(
    proc: ToyProcess,
    F: ItoFunction,
    V: SmoothRV,
    V_other: SmoothRV,
    space: NoiseSpace,
    dt: float,
    n_steps: int,
    n_mc: int,
    seed: int = 0,
    budget: ToleranceBudget = ITO_BUDGET,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> PairingResult:
    """Duality check of the Skorohod term against a second smooth random variable"""
    mu = space.mu_array

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(space, dt, n_steps, seed, chunk)
        return _ito_terms(proc, F, V, inc, dt, mu, V_other)

    terms = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "skorohod pairing")
    pairing = _implied_skorohod(terms) * terms[:, 6]
    diff = mean_ci(pairing - terms[:, 7])
    return PairingResult(
        float(pairing.mean()), float(terms[:, 7].mean()), diff, budget.tol(0.0, dt, diff.se)
    )


@dataclass(frozen=True)
class ItoCase:
    """A built-in (process, F, V) triple with a second variable for the pairing"""

    name: str
    proc: ToyProcess
    F: ItoFunction
    V: SmoothRV
    V_other: SmoothRV
    oracle: float | None = None


def _constant_direction(values: Sequence[float], n_steps: int) -> np.ndarray:
    return np.tile(np.asarray(values, dtype=float), (n_steps, 1))


def ito_case(name: str, space: NoiseSpace, dt: float, n_steps: int) -> ItoCase:
    """Build one of ITO_CASES on n_steps steps of size dt

    Directions of the smooth random variables are constant in time, so the
    same case on a coarsened path sees the same V.
    """
    m = space.m
    mu = space.mu_array
    ramp = (np.arange(m) + 1.0) / m
    t_final = n_steps * dt
    other = SmoothRV.linear(_constant_direction(np.cos(np.pi * ramp), n_steps))
    if name == "identity":
        proc = ToyProcess(0.5, tuple(0.5 * ramp), lambda s, x: np.cos(x), lambda s, x: -0.5 * x, "X_cos")
        F = ItoFunction(
            lambda z, l, t: z,
            lambda z, l, t: np.ones_like(z),
            lambda z, l, t: np.zeros_like(z),
            lambda z, l, t: np.zeros_like(z),
            lambda z, l, t: np.zeros_like(z),
            "zeta",
        )
        V = SmoothRV.composed(np.tanh, lambda y: 1.0 / np.cosh(y) ** 2, _constant_direction(0.5 * np.ones(m), n_steps))
        return ItoCase(name, proc, F, V, other)
    if name == "product":
        a = 0.4 * np.ones(m)
        shape = lambda s, x: 1.0 + 0.5 * np.sin(s)  # noqa: E731
        proc = ToyProcess(0.5, tuple(a), shape, lambda s, x: 0.3, "X_det")
        F = ItoFunction(
            lambda z, l, t: z * l,
            lambda z, l, t: l * np.ones_like(z),
            lambda z, l, t: np.zeros_like(z),
            lambda z, l, t: np.zeros_like(z),
            lambda z, l, t: np.ones_like(z),
            "zeta*lambda",
        )
        V = SmoothRV.linear(_constant_direction(ramp, n_steps))
        # E[X(t) W(h)] = <h, u>_H for deterministic u
        s = np.arange(n_steps) * dt
        oracle = float(np.sum(shape(s, 0.0)) * dt * np.sum(mu * ramp * a))
        return ItoCase(name, proc, F, V, other, oracle)
    if name == "square":
        a = 0.3 * np.ones(m)
        proc = ToyProcess(0.5, tuple(a), lambda s, x: 1.0, lambda s, x: 1.0, "X_affine")
        F = ItoFunction(
            lambda z, l, t: z**2,
            lambda z, l, t: 2.0 * z,
            lambda z, l, t: np.zeros_like(z),
            lambda z, l, t: 2.0 * np.ones_like(z),
            lambda z, l, t: np.zeros_like(z),
            "zeta^2",
        )
        V = SmoothRV.constant(0.0, n_steps, m)
        oracle = float((0.5 + t_final) ** 2 + t_final * np.sum(mu * a**2))
        return ItoCase(name, proc, F, V, other, oracle)
    if name == "anticipating":
        proc = ToyProcess(
            0.0, tuple(0.5 * ramp), lambda s, x: 1.0 + 0.5 * np.cos(x), lambda s, x: -0.5 * np.sin(x), "X_mod"
        )
        F = ItoFunction(
            lambda z, l, t: np.sin(z + l) + t * z,
            lambda z, l, t: np.cos(z + l) + t,
            lambda z, l, t: z,
            lambda z, l, t: -np.sin(z + l),
            lambda z, l, t: -np.sin(z + l),
            "sin(zeta+lambda)+t*zeta",
        )
        V = SmoothRV.composed(np.tanh, lambda y: 1.0 / np.cosh(y) ** 2, _constant_direction(0.8 * np.ones(m), n_steps))
        return ItoCase(name, proc, F, V, other)
    raise ConfigError(f"Unknown Ito case '{name}'. Available: {', '.join(ITO_CASES)}")


def run_case(
    name: str,
    space: NoiseSpace,
    dt: float,
    t_final: float,
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> tuple[ItoResult, PairingResult]:
    n_steps = int(round(t_final / dt))
    case = ito_case(name, space, dt, n_steps)
    with warnings.catch_warnings():
        # the polynomial cases knowingly leave the bounded-derivative class
        warnings.simplefilter("ignore", RegimeWarning)
        result = verify_anticipating_ito(
            case.proc, case.F, case.V, space, dt, n_steps, n_mc, seed, case.oracle, name,
            max_workers=max_workers, chunk_size=chunk_size,
        )
    pairing = skorohod_pairing(
        case.proc, case.F, case.V, case.V_other, space, dt, n_steps, n_mc, seed,
        max_workers=max_workers, chunk_size=chunk_size,
    )
    return result, pairing


def weak_order_study(
    name: str,
    space: NoiseSpace,
    dt_list: Sequence[float],
    t_final: float,
    n_mc: int,
    seed: int = 0,
    max_workers: int = DEFAULT_MAX_WORKERS,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> SweepFit:
    """Residual bias across time steps on common paths, fitted against dt

    Every dt must be an integer multiple of the smallest one; coarse
    increments are sums of the fine ones.
    """
    dt_list = sorted(float(dt) for dt in dt_list)
    fine = dt_list[0]
    n_fine = int(round(t_final / fine))
    factors = [int(round(dt / fine)) for dt in dt_list]
    if any(abs(f * fine - dt) > 1e-9 * dt or n_fine % f for f, dt in zip(factors, dt_list)):
        raise ConfigError(f"time steps {dt_list} do not nest into {n_fine} steps of {fine:g}")
    cases = [ito_case(name, space, dt, n_fine // f) for dt, f in zip(dt_list, factors)]
    mu = space.mu_array

    def sample(chunk: range) -> np.ndarray:
        inc = sample_increments(space, fine, n_fine, seed, chunk)
        out = []
        for case, dt, f in zip(cases, dt_list, factors):
            coarse = inc.reshape(len(chunk), n_fine // f, f, space.m).sum(axis=2)
            out.append(_implied_skorohod(_ito_terms(case.proc, case.F, case.V, coarse, dt, mu)))
        return np.stack(out, axis=-1)

    samples = run_monte_carlo(sample, n_mc, max_workers, chunk_size, "weak order")
    mean, se, _, _ = mean_ci(samples)
    table = pd.DataFrame({"dt": dt_list, "bias": mean, "se": se})
    slope, r2 = fit_loglog_slope(table["dt"], table["bias"])
    return SweepFit(table, slope, r2, theory=1.0)
