"""Finite noise spaces, noise coefficients and discretized martingale measures

W(dt, dz) lives on a finite set of nodes z_1..z_m with masses mu_k; over a
time step it is a matrix of independent N(0, dt * mu_k) increments. Each
Monte Carlo sample draws from its own counter-based stream, keyed by
(seed, stream_id), so results do not depend on how samples are scheduled.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

from entropy_lab.grid import GridField
from entropy_lab.util import ConfigError
from entropy_lab.weights import Weight

logger = logging.getLogger(__name__)

PATH_MAGIC = b"ELNP"
PATH_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("seed", "<u8"),
        ("stream", "<i8"),
        ("dt", "<f8"),
        ("n_steps", "<i8"),
        ("m", "<i8"),
    ]
)


@dataclass(frozen=True)
class NoiseSpace:
    """Nodes z_1..z_m with positive masses mu_k"""

    mu: tuple[float, ...]
    nodes: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.mu) < 1:
            raise ConfigError("a noise space needs at least one node")
        if any(not m > 0 for m in self.mu):
            raise ConfigError(f"node masses must be positive, got {self.mu}")
        if not self.nodes:
            object.__setattr__(
                self, "nodes", tuple(k / len(self.mu) for k in range(len(self.mu)))
            )

    @classmethod
    def uniform(cls, m: int = 4) -> NoiseSpace:
        return cls(tuple([1.0 / m] * m))

    @property
    def m(self) -> int:
        return len(self.mu)

    @property
    def mu_array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    def l2_norm(self, values) -> float:
        """(sum_k mu_k v_k^2)^(1/2)"""
        return float(np.sqrt(np.sum(self.mu_array * np.asarray(values) ** 2)))


class SigmaFamily(Enum):
    ZERO = "zero"
    ADDITIVE = "additive"
    LINEAR = "linear"
    SIN = "sin"
    RATIONAL = "rational"
    MODULATED = "modulated"


def _s(family: SigmaFamily, u):
    if family in (SigmaFamily.ADDITIVE, SigmaFamily.ZERO):
        return np.ones_like(u)
    if family == SigmaFamily.LINEAR:
        return u
    if family in (SigmaFamily.SIN, SigmaFamily.MODULATED):
        return np.sin(u)
    return u / (1.0 + u * u)


def _ds(family: SigmaFamily, u):
    if family in (SigmaFamily.ADDITIVE, SigmaFamily.ZERO):
        return np.zeros_like(u)
    if family == SigmaFamily.LINEAR:
        return np.ones_like(u)
    if family in (SigmaFamily.SIN, SigmaFamily.MODULATED):
        return np.cos(u)
    q = 1.0 + u * u
    return (1.0 - u * u) / (q * q)


@dataclass(frozen=True)
class SigmaCoeff:
    """sigma(x, u, z_k) = g_k * s(u) * m(x) with m(x) = 1 + a sin(pi x / L)

    Attributes:
        family: the shape s of the u-dependence
        g: node amplitudes g_k
        space: the noise space
        half_width: L, the torus half width used by the modulation
        modulation: a, zero unless spatially modulated
        kappa: Holder parameter; sigma is (kappa + 1/2)-Holder in x
    """

    family: SigmaFamily
    g: tuple[float, ...]
    space: NoiseSpace
    half_width: float = 10.0
    modulation: float = 0.0
    kappa: float = 0.5

    def __post_init__(self):
        if len(self.g) != self.space.m:
            raise ConfigError(f"{len(self.g)} amplitudes for {self.space.m} nodes")
        if not 0 < self.kappa <= 0.5:
            raise ConfigError(f"kappa must lie in (0, 1/2], got {self.kappa}")
        if not abs(self.modulation) < 1:
            raise ConfigError(f"modulation must lie in (-1, 1), got {self.modulation}")
        violations = _assumption_sweep(self)
        if violations:
            raise ConfigError(f"sigma {self} violates its envelope: {violations}")

    def __str__(self) -> str:
        return f"{self.family.value}(g={self.g}, a={self.modulation:g})"

    @property
    def g_array(self) -> np.ndarray:
        return np.asarray(self.g, dtype=float)

    @property
    def holder_exponent(self) -> float:
        return self.kappa + 0.5

    @property
    def is_x_dependent(self) -> bool:
        return self.modulation != 0.0

    @property
    def is_additive(self) -> bool:
        return self.family in (SigmaFamily.ADDITIVE, SigmaFamily.ZERO)

    @property
    def M(self) -> np.ndarray:
        """Envelope M(z_k) for the Lipschitz, growth and Holder bounds"""
        a = abs(self.modulation)
        e = self.holder_exponent
        holder = (a * np.pi / self.half_width) ** e * (2.0 * a) ** (1.0 - e)
        return np.abs(self.g_array) * max(1.0 + a, holder)

    @property
    def lip_norm(self) -> float:
        """||M||_{L^2(Z)}"""
        return self.space.l2_norm(self.M)

    def modulation_profile(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 1.0 + self.modulation * np.sin(np.pi * x / self.half_width)


def _assumption_sweep(c: SigmaCoeff, n: int = 1000) -> list[str]:
    rng = np.random.default_rng(0)
    L = c.half_width
    x, y = rng.uniform(-L, L, n), rng.uniform(-L, L, n)
    u, v = rng.uniform(-10.0, 10.0, n), rng.uniform(-10.0, 10.0, n)
    k = rng.integers(0, c.space.m, n)
    M = c.M[k] * (1.0 + 1e-12) + 1e-300
    su, sv = eval_sigma(c, x, u, k), eval_sigma(c, x, v, k)
    out = []
    if np.any(np.abs(su - sv) > np.abs(u - v) * M):
        out.append("Lipschitz in u")
    if np.any(np.abs(su) > M * (1.0 + np.abs(u))):
        out.append("linear growth")
    e = c.holder_exponent
    sy = eval_sigma(c, y, u, k)
    if np.any(np.abs(su - sy) > M * np.abs(x - y) ** e * (1.0 + np.abs(u))):
        out.append("Holder in x")
    return out


def sigma_from_key(
    key: str, space: NoiseSpace, half_width: float = 10.0, kappa: float = 0.5
) -> SigmaCoeff:
    """Parse "family:g[:a]" with g_k = g (k + 1) / m

    The modulated family defaults to a = 0.5; "zero" takes no amplitude.
    """
    parts = key.strip().split(":")
    try:
        family = SigmaFamily(parts[0])
        g = 0.0 if family == SigmaFamily.ZERO else float(parts[1])
        default_a = 0.5 if family == SigmaFamily.MODULATED else 0.0
        a = float(parts[2]) if len(parts) > 2 else default_a
    except (ValueError, IndexError) as e:
        raise ConfigError(f"Unable to parse sigma '{key}': {e}") from e
    m = space.m
    amplitudes = tuple(g * (k + 1) / m for k in range(m))
    return SigmaCoeff(family, amplitudes, space, half_width, a, kappa)


def eval_sigma(c: SigmaCoeff, x, u, k) -> np.ndarray:
    """sigma(x, u, z_k); x, u and k broadcast"""
    u = np.asarray(u, dtype=float)
    return c.g_array[k] * _s(c.family, u) * c.modulation_profile(x)


def sigma_all(c: SigmaCoeff, x, u) -> np.ndarray:
    """sigma(x, u, z_k) for every node, stacked on a new leading axis"""
    u = np.asarray(u, dtype=float)
    base = _s(c.family, u) * c.modulation_profile(x)
    return c.g_array.reshape((-1,) + (1,) * base.ndim) * base


def d_sigma_du(c: SigmaCoeff, x, u) -> np.ndarray:
    """The u-derivative of sigma for every node, stacked like sigma_all"""
    u = np.asarray(u, dtype=float)
    base = _ds(c.family, u) * c.modulation_profile(x)
    return c.g_array.reshape((-1,) + (1,) * base.ndim) * base


def hs_norm_G(c: SigmaCoeff, u: GridField, w: Weight) -> np.ndarray:
    """Hilbert-Schmidt norm of G(u): (int int sigma^2 phi dmu dx)^(1/2)"""
    sig = sigma_all(c, u.grid.x, u.values)
    phi = w.on_grid(u.grid)
    per_node = u.grid.integrate(sig**2 * phi)
    return np.sqrt(np.tensordot(c.space.mu_array, per_node, axes=([0], [0])))


def sigma_lip_distance(
    c1: SigmaCoeff, c2: SigmaCoeff, n: int = 4000, u_max: float = 10.0
) -> float:
    """Sampled estimate of ||sigma_1 - sigma_2||_Lip = ||M_{sigma_1 - sigma_2}||_{L^2(Z)}"""
    if c1.space != c2.space:
        raise ConfigError("sigma coefficients live on different noise spaces")
    rng = np.random.default_rng(1)
    L = c1.half_width
    x = rng.uniform(-L, L, n)
    u, v = rng.uniform(-u_max, u_max, n), rng.uniform(-u_max, u_max, n)
    envelope = np.zeros(c1.space.m)
    for k in range(c1.space.m):
        du = eval_sigma(c1, x, u, k) - eval_sigma(c2, x, u, k)
        dv = eval_sigma(c1, x, v, k) - eval_sigma(c2, x, v, k)
        lip = np.max(np.abs(du - dv) / np.maximum(np.abs(u - v), 1e-12))
        growth = np.max(np.abs(du) / (1.0 + np.abs(u)))
        envelope[k] = max(lip, growth)
    return c1.space.l2_norm(envelope)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Gaussian increments dW[n, k] over (time step, noise node) cells

    Attributes:
        dt: the time step
        increments: read-only array of shape (n_steps, m)
        seed: the base seed of the generator
        stream_id: the stream the increments were drawn from
        mu: node masses of the noise space
    """

    dt: float
    increments: np.ndarray
    seed: int
    stream_id: int
    mu: tuple[float, ...] = field(default=())

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)
        if not self.mu:
            object.__setattr__(self, "mu", tuple([1.0 / inc.shape[1]] * inc.shape[1]))

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def m(self) -> int:
        return self.increments.shape[1]

    def __repr__(self) -> str:
        return (
            f"<NoisePath seed={self.seed} stream={self.stream_id} "
            f"steps={self.n_steps} m={self.m}>"
        )


def stream_generator(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based generator for one (seed, stream) pair"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(sequence))


def sample_path(
    space: NoiseSpace, dt: float, n_steps: int, seed: int, stream_id: int
) -> NoisePath:
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    z = stream_generator(seed, stream_id).standard_normal((n_steps, space.m))
    return NoisePath(dt, z * np.sqrt(dt * space.mu_array), seed, stream_id, space.mu)


def sample_increments(
    space: NoiseSpace, dt: float, n_steps: int, seed: int, streams: Iterable[int]
) -> np.ndarray:
    """Increments of several streams stacked to shape (n_streams, n_steps, m)"""
    return stack_increments(
        [sample_path(space, dt, n_steps, seed, s) for s in streams]
    )


def stack_increments(paths: list[NoisePath]) -> np.ndarray:
    return np.stack([p.increments for p in paths])


def shift_path(p: NoisePath, n: int, k: int, eps: float) -> NoisePath:
    """Copy of p with dW[n, k] += eps"""
    if not (0 <= n < p.n_steps and 0 <= k < p.m):
        raise IndexError(f"cell ({n}, {k}) outside a {p.n_steps}x{p.m} path")
    inc = p.increments.copy()
    inc[n, k] += eps
    return replace(p, increments=inc)


def coarsen_path(p: NoisePath, factor: int) -> NoisePath:
    """Sum consecutive increments, giving the same Brownian path at dt * factor"""
    if factor < 1 or p.n_steps % factor:
        raise ValueError(f"cannot coarsen {p.n_steps} steps by {factor}")
    inc = p.increments.reshape(p.n_steps // factor, factor, p.m).sum(axis=1)
    return replace(p, dt=p.dt * factor, increments=inc)


def _header(p: NoisePath) -> np.ndarray:
    return np.array(
        [(PATH_MAGIC, p.seed, p.stream_id, p.dt, p.n_steps, p.m)], dtype=PATH_HEADER
    )


def path_hash(p: NoisePath) -> str:
    """sha256 over the serialized header and increments"""
    digest = hashlib.sha256(_header(p).tobytes())
    digest.update(np.ascontiguousarray(p.increments, dtype="<f8").tobytes())
    return digest.hexdigest()


def save_path(p: NoisePath, path: str | Path) -> None:
    """Write the header followed by row-major little-endian float64 increments"""
    Path(path).resolve().parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_header(p).tobytes())
        f.write(np.ascontiguousarray(p.increments, dtype="<f8").tobytes())


def load_path(path: str | Path, space: NoiseSpace | None = None) -> NoisePath:
    """Read a path written by save_path; mu comes from space (uniform by default)"""
    with open(path, "rb") as f:
        header = np.frombuffer(f.read(PATH_HEADER.itemsize), dtype=PATH_HEADER)[0]
        if header["magic"] != PATH_MAGIC:
            raise ValueError(f"{path} is not a noise path file")
        n_steps, m = int(header["n_steps"]), int(header["m"])
        body = np.frombuffer(f.read(8 * n_steps * m), dtype="<f8")
    if body.size != n_steps * m:
        raise ValueError(f"{path} is truncated")
    space = space or NoiseSpace.uniform(m)
    return NoisePath(
        float(header["dt"]),
        body.reshape(n_steps, m),
        int(header["seed"]),
        int(header["stream"]),
        space.mu,
    )
