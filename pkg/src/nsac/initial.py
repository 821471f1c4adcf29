"""Initial-condition generation.

``random_perturbation`` builds zero-mean band-limited sigma and u together
with a one-sided phase perturbation (phi <= 1 pointwise, so the discrete
phase bound holds from the first snapshot on) and rescales the trio so that

    ||(sigma, u)||_{H^3} + ||grad phi||_{H^2} + ||phi^2 - 1|| = delta

holds to 1e-10. Everything is deterministic given the seed.
"""

from __future__ import annotations

import numpy as np

from .config import ICSpec, RunConfig
from .errors import InfeasibleInitialCondition
from .model import PHI_TOL, PhysParams, State
from .spectral import Grid, SpectralField, hk_norm_sq


def _band_limited_noise(rng: np.random.Generator, grid: Grid, max_mode: int) -> np.ndarray:
    """Zero-mean real field with integer modes ``0 < |m| <= max_mode``."""
    if max_mode > grid.n // 3:
        raise InfeasibleInitialCondition(
            f"ic.max_mode = {max_mode} exceeds the de-aliased band n/3 = {grid.n // 3}"
        )
    noise = rng.standard_normal(grid.shape)
    c = grid.forward(noise)
    m2 = (grid.length / (2.0 * np.pi)) ** 2 * grid.k2  # squared integer mode magnitude
    keep = (m2 > 0.25) & (m2 <= max_mode**2 + 1e-9)
    c = np.where(keep, c, 0.0)
    phys = grid.inverse(c)
    scale = float(np.sqrt(np.mean(phys**2)))
    return c / scale if scale > 0 else c


def _combined_norm(grid: Grid, sigma_hat, u_hat, psi_hat, alpha: float) -> float:
    """The scaled smallness functional; monotone increasing in ``alpha``."""
    su = np.sqrt(
        alpha**2
        * (
            hk_norm_sq(SpectralField(grid, sigma_hat), 3)
            + sum(hk_norm_sq(SpectralField(grid, u_hat[i]), 3) for i in range(grid.dim))
        )
    )
    gp_sq = 0.0
    k2 = grid.k2
    mag2 = (psi_hat.real**2 + psi_hat.imag**2) * grid.weight
    pw = k2.copy()
    for _ in range(3):  # ||grad psi||^2 + ||D^2 psi||^2 + ||D^3 psi||^2
        gp_sq += float(np.sum(pw * mag2))
        pw = pw * k2
    gp = alpha * np.sqrt(grid.volume * gp_sq)
    psi = grid.inverse(psi_hat)
    phisq = (1.0 + alpha * psi) ** 2 - 1.0
    l2 = np.sqrt(grid.volume * float(np.mean(phisq**2)))
    return su + gp + l2


def _random_perturbation(grid: Grid, params: PhysParams, ic: ICSpec) -> State:
    rng = np.random.default_rng(ic.seed)
    sigma_hat = _band_limited_noise(rng, grid, ic.max_mode)
    u_hat = np.stack([_band_limited_noise(rng, grid, ic.max_mode) for _ in range(grid.dim)])
    # one-sided phase bump: psi <= 0 keeps phi <= 1 pointwise
    raw = _band_limited_noise(rng, grid, ic.max_mode)
    bump = grid.inverse(raw)
    bump = bump - bump.max()
    psi_hat = grid.forward(bump)

    target = ic.delta
    lo, hi = 0.0, 1.0
    while _combined_norm(grid, sigma_hat, u_hat, psi_hat, hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise InfeasibleInitialCondition("cannot reach the requested smallness norm")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _combined_norm(grid, sigma_hat, u_hat, psi_hat, mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    alpha = 0.5 * (lo + hi)

    phi_hat = alpha * psi_hat
    phi_hat[(0,) * grid.dim] += 1.0
    state = State(grid, 0.0, alpha * sigma_hat, alpha * u_hat, phi_hat)
    _check_feasible(state, params, ic.delta)
    return state


def _check_feasible(state: State, params: PhysParams, delta: float) -> None:
    rho = params.rho_bar + state.sigma()
    if rho.min() < 0.5 * params.rho_bar or rho.max() > 2.0 * params.rho_bar:
        raise InfeasibleInitialCondition(
            f"delta = {delta:g} pushes the density out of "
            f"[{0.5 * params.rho_bar:g}, {2 * params.rho_bar:g}] before any stepping "
            f"(range [{rho.min():.6g}, {rho.max():.6g}])"
        )
    phi = state.phi()
    if np.max(np.abs(phi)) > 1.0 + PHI_TOL:
        raise InfeasibleInitialCondition(
            f"delta = {delta:g} violates the phase bound |phi| <= 1 + {PHI_TOL:g} at t = 0 "
            f"(max |phi| = {np.max(np.abs(phi)):.6g})"
        )


def _tanh_interface(grid: Grid, width: float) -> State:
    """Two flat interfaces along the first axis; demo profile, not for decay runs."""
    x = grid.meshgrid()[0]
    L = grid.length
    phi1d = np.tanh((x - L / 4.0) / width) - np.tanh((x - 3.0 * L / 4.0) / width) - 1.0
    sigma = np.zeros(grid.shape)
    u = np.zeros((grid.dim,) + grid.shape)
    return State.from_physical(grid, 0.0, sigma, u, phi1d)


def _manufactured(grid: Grid, amplitude: float) -> State:
    """Fixed smooth deterministic perturbation used by convergence studies."""
    xs = grid.meshgrid()
    a = amplitude
    sigma = a * np.sin(2.0 * np.pi * xs[0] / grid.length)
    u = np.zeros((grid.dim,) + grid.shape)
    u[0] = a * np.sin(2.0 * np.pi * xs[-1] / grid.length)
    if grid.dim > 1:
        u[1] = a * np.cos(2.0 * np.pi * xs[0] / grid.length)
    bump = np.ones(grid.shape)
    for x in xs:
        bump = bump * (1.0 - np.cos(2.0 * np.pi * x / grid.length)) / 2.0
    phi = 1.0 - a * bump
    return State.from_physical(grid, 0.0, sigma, u, phi)


def make_initial(cfg: RunConfig) -> State:
    """Build the configured initial state; fails fast if it is infeasible."""
    grid, params, ic = cfg.grid, cfg.phys, cfg.ic
    if ic.kind == "equilibrium":
        return State.equilibrium(grid)
    if ic.kind == "random_perturbation":
        return _random_perturbation(grid, params, ic)
    if ic.kind == "tanh_interface":
        state = _tanh_interface(grid, ic.width)
        _check_feasible(state, params, ic.delta)
        return state
    if ic.kind == "manufactured":
        state = _manufactured(grid, ic.amplitude)
        _check_feasible(state, params, ic.amplitude)
        return state
    raise InfeasibleInitialCondition(f"unknown ic kind {ic.kind!r}")
