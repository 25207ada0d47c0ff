"""Small configurations shared by the test modules"""
from entropy_lab.grid import Grid
from entropy_lab.noise import NoiseSpace, sigma_from_key
from entropy_lab.viscous_solver import SolverConfig, flux_from_key
from entropy_lab.weights import weight_from_key


def make_config(
    flux="burgers:1.0",
    sigma="sin:0.5",
    weight="poly:1",
    n_x=64,
    half_width=10.0,
    eps=0.05,
    dt=0.01,
    n_steps=20,
    m=4,
    **changes,
) -> SolverConfig:
    grid = Grid(n_x, half_width)
    space = NoiseSpace.uniform(m)
    return SolverConfig(
        grid=grid,
        eps=eps,
        dt=dt,
        n_steps=n_steps,
        flux=flux_from_key(flux),
        sigma=sigma_from_key(sigma, space, half_width),
        weight=weight_from_key(weight),
        **changes,
    )
