"""Weights of the class N, mollifiers and weighted norms on the grid

A weight is a positive C^1 function phi in L^1 with |phi'| <= c_phi * phi.
All integrals are taken on the periodic grid [-L, L); the mass a weight puts
outside the torus is reported by tail_mass.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from entropy_lab.grid import Grid, GridField
from entropy_lab.util import ConfigError

logger = logging.getLogger(__name__)

"""Gauss-Legendre nodes used to convolve a weight with a mollifier"""
MOLLIFIER_NODES = 128

_GL_Y, _GL_W = np.polynomial.legendre.leggauss(MOLLIFIER_NODES)
_GAP = 1e-6


def _inside(y):
    y = np.asarray(y, dtype=float)
    s = 1.0 - y * y
    inside = s > _GAP
    return y, np.where(inside, s, 1.0), inside


def _bump(y):
    y, s, inside = _inside(y)
    return np.where(inside, np.exp(-1.0 / s), 0.0)


def _bump_d1(y):
    y, s, inside = _inside(y)
    return np.where(inside, np.exp(-1.0 / s) * (-2.0 * y / s**2), 0.0)


def _bump_d2(y):
    y, s, inside = _inside(y)
    g1 = -2.0 * y / s**2
    g2 = -(2.0 + 6.0 * y * y) / s**3
    return np.where(inside, np.exp(-1.0 / s) * (g1**2 + g2), 0.0)


_J_MASS = integrate.quad(lambda y: float(_bump(np.array(y))), -1.0, 1.0, epsabs=1e-14)[0]

# CDF of the unit bump and its antiderivative, tabulated once
_TABLE_Y = np.linspace(-1.0, 1.0, 16385)
_TABLE_F = integrate.cumulative_trapezoid(_bump(_TABLE_Y), _TABLE_Y, initial=0.0)
_TABLE_F /= _TABLE_F[-1]
_HALF = _TABLE_Y >= 0.0
_TABLE_G = integrate.cumulative_trapezoid(
    2.0 * _TABLE_F[_HALF] - 1.0, _TABLE_Y[_HALF], initial=0.0
)


def J(y):
    """The standard mollifier on [-1, 1], unit mass"""
    return _bump(y) / _J_MASS


def J_prime(y):
    return _bump_d1(y) / _J_MASS


def J_second(y):
    return _bump_d2(y) / _J_MASS


def J_cdf(y):
    """int_{-1}^y J"""
    return np.interp(y, _TABLE_Y, _TABLE_F)


def J_cdf_antiderivative(y):
    """G(y) = int_0^|y| (2F - 1), extended linearly past 1"""
    a = np.abs(np.asarray(y, dtype=float))
    inner = np.interp(np.minimum(a, 1.0), _TABLE_Y[_HALF], _TABLE_G)
    return inner + np.maximum(a - 1.0, 0.0)


"""L^1 norm of J'"""
J_PRIME_L1 = 2.0 * float(J(np.array(0.0)))


@dataclass(frozen=True)
class Mollifier:
    """J_r(x) = J(x/r)/r, or the shifted J_r^+(x) = J_r(x - r)

    Attributes:
        r: radius
        shifted: use J_r^+ (supported in (0, 2r))
    """

    r: float
    shifted: bool = False

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigError(f"mollifier radius must be positive, got {self.r}")

    def _arg(self, x):
        x = np.asarray(x, dtype=float)
        return (x - self.r if self.shifted else x) / self.r

    def __call__(self, x):
        return J(self._arg(x)) / self.r

    def derivative(self, x):
        return J_prime(self._arg(x)) / self.r**2

    def second_derivative(self, x):
        return J_second(self._arg(x)) / self.r**3

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 2.0 * self.r) if self.shifted else (-self.r, self.r)

    def mass(self) -> float:
        lo, hi = self.support
        return integrate.quad(
            lambda x: float(self(np.array(x))), lo, hi, epsabs=1e-14, epsrel=1e-13
        )[0]

    def lag_weights(self, dt: float) -> np.ndarray:
        """Discrete J_r^+ on the lags 1, 2, ... of a time grid, unit discrete mass

        Index l of the result holds the weight of lag l (index 0 is always 0).
        """
        if self.r < dt:
            raise ValueError(f"mollifier radius {self.r} is below the time step {dt}")
        n_lags = int(np.ceil(2.0 * self.r / dt - 1e-9))
        lags = np.arange(n_lags + 1) * dt
        w = Mollifier(self.r, shifted=True)(lags)
        return w / (w.sum() * dt)


def _step_parts(t):
    # outside (1e-3, 1 - 1e-3) the step is flat to double precision
    t = np.asarray(t, dtype=float)
    mid = (t > 1e-3) & (t < 1.0 - 1e-3)
    tm = np.where(mid, t, 0.5)
    a, b = np.exp(-1.0 / tm), np.exp(-1.0 / (1.0 - tm))
    return t, tm, a, b, mid


def _smooth_step(t):
    """C^inf step: 0 for t <= 0, 1 for t >= 1"""
    t, tm, a, b, mid = _step_parts(t)
    return np.where(mid, a / (a + b), np.where(t >= 0.5, 1.0, 0.0))


def _smooth_step_d1(t):
    t, tm, a, b, mid = _step_parts(t)
    c = 1.0 / tm**2 + 1.0 / (1.0 - tm) ** 2
    return np.where(mid, a * b * c / (a + b) ** 2, 0.0)


def _smooth_step_d2(t):
    t, tm, a, b, mid = _step_parts(t)
    s = a + b
    ds = a / tm**2 - b / (1.0 - tm) ** 2
    c = 1.0 / tm**2 + 1.0 / (1.0 - tm) ** 2
    dc = -2.0 / tm**3 + 2.0 / (1.0 - tm) ** 3
    p = a * b * c
    dp = a * b * (c * (1.0 / tm**2 - 1.0 / (1.0 - tm) ** 2) + dc)
    return np.where(mid, dp / s**2 - 2.0 * p * ds / s**3, 0.0)


# Cutoff used by truncated weights: 1 on [-1, 1], 0 outside [-2, 2]
def cutoff(y):
    return 1.0 - _smooth_step(np.abs(y) - 1.0)


def cutoff_d1(y):
    y = np.asarray(y, dtype=float)
    return -_smooth_step_d1(np.abs(y) - 1.0) * np.sign(y)


def cutoff_d2(y):
    return -_smooth_step_d2(np.abs(np.asarray(y, dtype=float)) - 1.0)


CUTOFF_LIP = float(np.max(np.abs(cutoff_d1(np.linspace(0.0, 2.0, 20001)))))


class WeightKind(Enum):
    POLY = "poly"
    EXP = "exp"
    MOLLIFIED = "moll"
    TRUNCATED = "trunc"


@dataclass(frozen=True)
class Weight:
    """A weight function phi on the real line

    Attributes:
        kind: the weight family
        param: N for POLY, lambda for EXP, delta for MOLLIFIED, R for TRUNCATED
        base: the underlying weight for MOLLIFIED and TRUNCATED
    """

    kind: WeightKind
    param: float
    base: Weight | None = None

    def __post_init__(self):
        if self.kind in (WeightKind.MOLLIFIED, WeightKind.TRUNCATED):
            if self.base is None:
                raise ConfigError(f"{self.kind.value} weight needs a base weight")
        if self.kind == WeightKind.TRUNCATED and not self.param > 1:
            raise ConfigError(f"truncation radius must exceed 1, got {self.param}")
        if not self.param > 0:
            raise ConfigError(f"weight parameter must be positive, got {self.param}")

    def __str__(self) -> str:
        if self.base is None:
            return f"{self.kind.value}:{self.param:g}"
        return f"{self.kind.value}:{self.base}:{self.param:g}"

    @property
    def in_class(self) -> bool:
        """Whether the weight is strictly positive with log-Lipschitz constant c_phi"""
        if self.kind == WeightKind.TRUNCATED:
            return False
        return self.base is None or self.base.in_class

    @property
    def support_radius(self) -> float:
        """Radius outside which phi vanishes, inf for weights of full support"""
        if self.kind == WeightKind.TRUNCATED:
            return min(2.0 * self.param, self.base.support_radius)
        if self.kind == WeightKind.MOLLIFIED:
            return self.base.support_radius + self.param
        return np.inf

    @property
    def c_phi(self) -> float:
        if self.kind == WeightKind.POLY:
            return 2.0 * self.param
        if self.kind == WeightKind.EXP:
            return self.param
        if self.kind == WeightKind.MOLLIFIED:
            return self.base.c_phi
        return self.base.c_phi + CUTOFF_LIP / self.param

    @cached_property
    def l1_norm(self) -> float:
        if self.kind == WeightKind.MOLLIFIED:
            return self.base.l1_norm
        if self.kind == WeightKind.TRUNCATED:
            R = self.param
            return integrate.quad(self._scalar, -2 * R, 2 * R, limit=200)[0]
        return 2.0 * integrate.quad(self._scalar, 0.0, np.inf, limit=200)[0]

    def _scalar(self, x: float) -> float:
        return float(self(np.array([x]))[0])

    def _mollifier_offsets(self):
        delta = self.param
        w = _GL_W * J(_GL_Y)
        return delta * _GL_Y, w / w.sum()

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == WeightKind.POLY:
            return (1.0 + x * x) ** (-self.param)
        if self.kind == WeightKind.EXP:
            return np.exp(-self.param * np.sqrt(1.0 + x * x))
        if self.kind == WeightKind.MOLLIFIED:
            z, w = self._mollifier_offsets()
            return np.tensordot(self.base(x[..., None] - z), w, axes=([-1], [0]))
        return cutoff(x / self.param) * self.base(x)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == WeightKind.POLY:
            N = self.param
            return -2.0 * N * x * (1.0 + x * x) ** (-N - 1.0)
        if self.kind == WeightKind.EXP:
            s = np.sqrt(1.0 + x * x)
            return -self.param * x / s * self(x)
        if self.kind == WeightKind.MOLLIFIED:
            z, w = self._mollifier_offsets()
            return np.tensordot(self.base.gradient(x[..., None] - z), w, axes=([-1], [0]))
        R = self.param
        return cutoff_d1(x / R) / R * self.base(x) + cutoff(x / R) * self.base.gradient(x)

    def laplacian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == WeightKind.POLY:
            N = self.param
            q = 1.0 + x * x
            return -2.0 * N * q ** (-N - 1.0) + 4.0 * N * (N + 1.0) * x * x * q ** (
                -N - 2.0
            )
        if self.kind == WeightKind.EXP:
            lam = self.param
            s = np.sqrt(1.0 + x * x)
            return self(x) * (lam * lam * x * x / (s * s) - lam / s**3)
        if self.kind == WeightKind.MOLLIFIED:
            z, w = self._mollifier_offsets()
            return np.tensordot(self.base.laplacian(x[..., None] - z), w, axes=([-1], [0]))
        R = self.param
        return (
            cutoff_d2(x / R) / R**2 * self.base(x)
            + 2.0 * cutoff_d1(x / R) / R * self.base.gradient(x)
            + cutoff(x / R) * self.base.laplacian(x)
        )

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self(grid.x)


def poly_weight(N: float) -> Weight:
    """phi_N(x) = (1 + x^2)^-N"""
    return Weight(WeightKind.POLY, float(N))


def exp_weight(lam: float) -> Weight:
    """phi_lambda(x) = exp(-lambda sqrt(1 + x^2))"""
    return Weight(WeightKind.EXP, float(lam))


def weight_from_key(key: str) -> Weight:
    """Parse "poly:N", "exp:lambda", "moll:<base>:<delta>" or "trunc:<base>:<R>"

    Nested bases are written inline, e.g. "moll:poly:2:0.1".
    """
    parts = key.strip().split(":")
    try:
        weight, rest = _parse_weight(parts)
    except (IndexError, ValueError) as e:
        raise ConfigError(f"Unable to parse weight '{key}': {e}") from e
    if rest:
        raise ConfigError(f"Unable to parse weight '{key}': trailing {rest}")
    return weight


def _parse_weight(parts: list[str]) -> tuple[Weight, list[str]]:
    kind = WeightKind(parts[0])
    if kind in (WeightKind.POLY, WeightKind.EXP):
        return Weight(kind, float(parts[1])), parts[2:]
    base, rest = _parse_weight(parts[1:])
    return Weight(kind, float(rest[0]), base), rest[1:]


def eval_weight(w: Weight, x) -> np.ndarray:
    return w(x)


def weighted_lp_norm(u: GridField, p: float, w: Weight) -> np.ndarray:
    """(int |u|^p phi dx)^(1/p) on the grid, over the last axis"""
    if not (np.isfinite(p) and p >= 1):
        raise ValueError(f"p must be finite and >= 1, got {p}")
    values = u.values
    phi = w.on_grid(u.grid)
    return (u.grid.integrate(np.abs(values) ** p * phi)) ** (1.0 / p)


def weighted_linf_norm(h: GridField, w: Weight) -> np.ndarray:
    """sup |h| / phi over the cells where phi > 0

    Raises:
        ConfigError: phi vanishes on the whole grid
    """
    phi = w.on_grid(h.grid)
    inside = phi > 0
    if not inside.any():
        raise ConfigError(f"{w} vanishes on every cell of the grid")
    return np.max(np.abs(h.values[..., inside]) / phi[inside], axis=-1)


def modulus_w(p: float, w: Weight | float, r) -> np.ndarray:
    """w_{p,phi}(r) = (C/p) r (1 + (C/p) r exp(C r / p))"""
    c_phi = w.c_phi if isinstance(w, Weight) else float(w)
    a = c_phi / p * np.asarray(r, dtype=float)
    return a * (1.0 + a * np.exp(a))


def mollify_weight(w: Weight, delta: float) -> Weight:
    return Weight(WeightKind.MOLLIFIED, float(delta), w)


def truncate_weight(w: Weight, R: float) -> Weight:
    return Weight(WeightKind.TRUNCATED, float(R), w)


def localized_young_bound(
    f: GridField, g: GridField, p: float, w: Weight
) -> tuple[float, float]:
    """Both sides of ||f * g||_{p,phi} <= (int |f| (1 + w_{p,phi}(|x|))) ||g||_{p,phi}

    f is read as a kernel centred at x = 0; the convolution is periodic.
    """
    grid = g.grid
    kernel = np.fft.ifftshift(f.values, axes=-1)
    conv = np.fft.irfft(
        np.fft.rfft(kernel, axis=-1) * np.fft.rfft(g.values, axis=-1), n=grid.n_x
    )
    lhs = weighted_lp_norm(GridField(conv * grid.dx, grid), p, w)
    mass = grid.integrate(np.abs(f.values) * (1.0 + modulus_w(p, w, np.abs(grid.x))))
    rhs = mass * weighted_lp_norm(g, p, w)
    return float(lhs), float(rhs)


def tail_mass(w: Weight, half_width: float) -> float:
    """int_{|x| > L} phi, the mass lost by truncating to the torus"""
    if w.kind == WeightKind.TRUNCATED:
        R = w.param
        if half_width >= 2 * R:
            return 0.0
        return 2.0 * integrate.quad(w._scalar, half_width, 2 * R, limit=200)[0]
    return 2.0 * integrate.quad(w._scalar, half_width, np.inf, limit=200)[0]


def suggest_half_width(w: Weight, ratio: float = 1e-6) -> float:
    """Smallest L with phi(L) / phi(0) < ratio

    Truncated weights vanish past 2R, which is returned for them.
    """
    if w.kind == WeightKind.TRUNCATED:
        return 2.0 * w.param
    target = np.log(ratio) + np.log(w._scalar(0.0))

    def gap(L):
        return np.log(w._scalar(L)) - target

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e8:
            raise ConfigError(f"weight {w} does not decay to {ratio}")
    return optimize.brentq(gap, 0.0, hi, xtol=1e-10)


@dataclass(frozen=True)
class WeightClassCheck:
    """Result of sweeping a weight over a grid"""

    min_value: float
    max_log_gradient: float
    c_phi: float
    tolerance: float

    @property
    def positive(self) -> bool:
        return self.min_value > 0

    @property
    def passed(self) -> bool:
        return self.positive and self.max_log_gradient <= self.c_phi + self.tolerance


def check_weight_class(w: Weight, grid: Grid) -> WeightClassCheck:
    """Check positivity and |phi'| <= c_phi phi by central differences of log phi"""
    phi = w.on_grid(grid)
    min_value = float(np.min(phi))
    tolerance = grid.dx**2 * max(w.c_phi, 1.0) ** 3
    if min_value <= 0:
        logger.debug("weight %s vanishes on the grid", w)
        return WeightClassCheck(min_value, np.inf, w.c_phi, tolerance)
    log_phi = np.log(phi)
    slope = (log_phi[2:] - log_phi[:-2]) / (2.0 * grid.dx)
    return WeightClassCheck(min_value, float(np.max(np.abs(slope))), w.c_phi, tolerance)
