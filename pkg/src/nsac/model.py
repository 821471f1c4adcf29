"""Compressible two-phase model: pressure law, free energy, and tendencies.

The evolved unknowns are the density perturbation ``sigma = rho - rho_bar``,
the velocity ``u`` and the phase field ``phi`` (pure phases at ``phi = +-1``).
In perturbation form the system reads

    sigma_t = -rho_bar div u + g1
    u_t     = (nu/rho_bar) Lap u + ((nu+lambda)/rho_bar) grad div u
              - (p'(rho_bar)/rho_bar) grad sigma - (eps/rho) grad(phi) Lap(phi)
              - (u.grad) u + h1(sigma) grad sigma
              - h2(sigma) (nu Lap u + (nu+lambda) grad div u)
    phi_t   = (eps/rho^2) Lap phi + (1 - phi^2) phi / (eps rho) - u.grad phi

with ``g1 = -div(sigma u)``, ``h1 = p'(rho_bar)/rho_bar - p'(rho)/rho`` and
``h2 = 1/rho_bar - 1/rho``. The capillary force uses the identity
``div(grad phi x grad phi - |grad phi|^2/2 I) = grad(phi) Lap(phi)`` (the
gradient part is absorbed into the pressure).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, VacuumError
from .spectral import Grid, SpectralField

#: Allowed overshoot of |phi| beyond 1 before a run is declared broken.
PHI_TOL = 1e-6


@dataclass(frozen=True)
class PhysParams:
    """Physical constants: viscosities, interface thickness, pressure law.

    ``lam`` is the second viscosity; ``nu > 0`` and ``lam + 2 nu / 3 >= 0``
    keep the stress dissipative. The barotropic law is ``p = a rho^gamma``.
    """

    nu: float = 1.0
    lam: float = 0.0
    epsilon: float = 0.1
    rho_bar: float = 1.0
    pressure_a: float = 1.0
    pressure_gamma: float = 1.4

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"shear viscosity must be positive, got {self.nu}")
        if self.lam + 2.0 * self.nu / 3.0 < 0:
            raise ValueError(
                f"need lambda + 2 nu / 3 >= 0, got {self.lam + 2 * self.nu / 3}"
            )
        if not self.epsilon > 0:
            raise ValueError(f"interface thickness must be positive, got {self.epsilon}")
        if not self.rho_bar > 0:
            raise ValueError(f"reference density must be positive, got {self.rho_bar}")
        if not self.pressure_a > 0:
            raise ValueError(f"pressure coefficient must be positive, got {self.pressure_a}")
        if self.pressure_gamma < 1:
            raise ValueError(f"adiabatic exponent must be >= 1, got {self.pressure_gamma}")

    @property
    def p_prime_bar(self) -> float:
        """Squared reference sound speed p'(rho_bar)."""
        return self.pressure_a * self.pressure_gamma * self.rho_bar ** (self.pressure_gamma - 1.0)


def pressure(rho, params: PhysParams):
    """Barotropic pressure ``a rho^gamma``; rejects vacuum states."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise VacuumError(f"pressure undefined at rho <= 0 (min rho = {rho.min():.6g})")
    out = params.pressure_a * rho**params.pressure_gamma
    return float(out) if out.ndim == 0 else out


def pressure_prime(rho, params: PhysParams):
    """``p'(rho) = a gamma rho^(gamma-1) > 0``."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise VacuumError(f"pressure_prime undefined at rho <= 0 (min rho = {rho.min():.6g})")
    out = params.pressure_a * params.pressure_gamma * rho ** (params.pressure_gamma - 1.0)
    return float(out) if out.ndim == 0 else out


def g_potential(rho, params: PhysParams):
    """Compression potential ``G(rho) = rho * int_rho_bar^rho (p(z)-p(rho_bar))/z^2 dz``.

    Nonnegative, vanishing at ``rho_bar`` and comparable to ``(rho-rho_bar)^2``
    on the admissible density window. Evaluated in closed form through
    ``x = rho/rho_bar - 1``:

        G = a rho rho_bar^(g-1) [ expm1((g-1) log1p(x))/(g-1) - x/(1+x) ]

    (log form for ``g = 1``). The expm1/log1p route keeps the result accurate
    relative to its O(x^2) size however small the perturbation; the naive
    antiderivative difference loses everything to cancellation once
    ``x ~ sqrt(eps)``, which would put a spurious noise floor under the
    energy ledger of decayed states.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise VacuumError(f"g_potential undefined at rho <= 0 (min rho = {rho.min():.6g})")
    a, g, rb = params.pressure_a, params.pressure_gamma, params.rho_bar
    x = rho / rb - 1.0
    if g == 1.0:
        # (1+x) log1p(x) - x, times a rho_bar
        out = a * rb * ((1.0 + x) * np.log1p(x) - x)
    else:
        integral = np.expm1((g - 1.0) * np.log1p(x)) / (g - 1.0) - x / (1.0 + x)
        out = a * rho * rb ** (g - 1.0) * integral
    return float(out) if out.ndim == 0 else out


def g_potential_prime(rho, params: PhysParams):
    """``G'(rho) = (G(rho) + p(rho) - p(rho_bar)) / rho``."""
    rho = np.asarray(rho, dtype=np.float64)
    return (g_potential(rho, params) + pressure(rho, params) - pressure(params.rho_bar, params)) / rho


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class State:
    """Fields at one time instant, stored spectrally with lazy physical views.

    The physical-space cache makes repeated evaluation (tendency, energy
    ledger, invariant monitor) share transforms; a State is immutable, so
    the cache never invalidates and snapshots are safe to share.
    """

    grid: Grid
    t: float
    sigma_hat: np.ndarray
    u_hat: np.ndarray  # shape (dim, *rshape)
    phi_hat: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        rshape = self.grid.rshape
        if self.sigma_hat.shape != rshape or self.phi_hat.shape != rshape:
            raise ValueError("scalar coefficient arrays must use the grid's rfft layout")
        if self.u_hat.shape != (self.grid.dim,) + rshape:
            raise ValueError("velocity coefficients must have shape (dim, *rshape)")
        for name in ("sigma_hat", "u_hat", "phi_hat"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.complex128)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_physical(cls, grid: Grid, t: float, sigma, u, phi) -> "State":
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (grid.dim,) + grid.shape:
            raise ValueError("u must have shape (dim, *grid.shape)")
        return cls(
            grid,
            t,
            grid.forward(np.asarray(sigma, dtype=np.float64)),
            np.stack([grid.forward(u[i]) for i in range(grid.dim)]),
            grid.forward(np.asarray(phi, dtype=np.float64)),
        )

    @classmethod
    def equilibrium(cls, grid: Grid, t: float = 0.0, phi_value: float = 1.0) -> "State":
        zero = np.zeros(grid.rshape, dtype=np.complex128)
        phi = zero.copy()
        phi[(0,) * grid.dim] = phi_value
        return cls(grid, t, zero, np.stack([zero.copy() for _ in range(grid.dim)]), phi)

    def _phys(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def sigma(self) -> np.ndarray:
        return self._phys("sigma", lambda: self.grid.inverse(self.sigma_hat))

    def u(self) -> np.ndarray:
        return self._phys("u", lambda: self.grid.inverse_many(self.u_hat))

    def phi(self) -> np.ndarray:
        return self._phys("phi", lambda: self.grid.inverse(self.phi_hat))

    def lap_phi(self) -> np.ndarray:
        return self._phys("lap_phi", lambda: self.grid.inverse(-self.grid.k2 * self.phi_hat))

    def grad_phi(self) -> np.ndarray:
        def build():
            g = self.grid
            return g.inverse_many(
                np.stack([1j * g.kvec[i] * self.phi_hat for i in range(g.dim)])
            )

        return self._phys("grad_phi", build)

    def sigma_field(self) -> SpectralField:
        return SpectralField(self.grid, self.sigma_hat)

    def phi_field(self) -> SpectralField:
        return SpectralField(self.grid, self.phi_hat)

    def u_fields(self) -> list[SpectralField]:
        return [SpectralField(self.grid, self.u_hat[i]) for i in range(self.grid.dim)]

    def mass(self, params: PhysParams) -> float:
        """Total fluid mass ``int rho dx`` on the box."""
        return self.grid.volume * (params.rho_bar + self.grid.mean_value(self.sigma_hat))


def check_state(state: State, params: PhysParams, step: int | None = None, phi_tol: float = PHI_TOL) -> None:
    """Enforce runtime invariants: finite fields, density window, phase bound.

    The density window ``[rho_bar/2, 2 rho_bar]`` is the regime in which the
    model's smallness assumptions are meaningful; leaving it is treated as
    blow-up rather than silently continued.
    """
    for name, arr in (("sigma", state.sigma_hat), ("u", state.u_hat), ("phi", state.phi_hat)):
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation(name, "non-finite coefficients", step=step)
    rho = params.rho_bar + state.sigma()
    rmin, rmax = float(rho.min()), float(rho.max())
    if rmin < 0.5 * params.rho_bar or rmax > 2.0 * params.rho_bar:
        idx = np.unravel_index(int(np.argmin(rho) if rmin < 0.5 * params.rho_bar else np.argmax(rho)), rho.shape)
        raise InvariantViolation(
            "rho",
            f"density left [{0.5 * params.rho_bar:g}, {2 * params.rho_bar:g}] "
            f"(min {rmin:.6g}, max {rmax:.6g})",
            step=step,
            magnitude=rmin if rmin < 0.5 * params.rho_bar else rmax,
            location=idx,
        )
    phi = state.phi()
    pmax = float(np.max(np.abs(phi)))
    if pmax > 1.0 + phi_tol:
        idx = np.unravel_index(int(np.argmax(np.abs(phi))), phi.shape)
        raise InvariantViolation(
            "phi",
            f"|phi| exceeded 1 + {phi_tol:g} (max |phi| = {pmax:.9g})",
            step=step,
            magnitude=pmax - 1.0,
            location=idx,
        )


# ---------------------------------------------------------------------------
# Pointwise constitutive quantities
# ---------------------------------------------------------------------------


def chemical_potential(state: State, params: PhysParams) -> np.ndarray:
    """``mu = (phi^3 - phi)/eps - (eps/rho) Lap phi`` on the grid."""
    phi = state.phi()
    rho = params.rho_bar + state.sigma()
    if np.any(rho <= 0):
        raise VacuumError("chemical_potential: vacuum state")
    eps = params.epsilon
    return (phi**3 - phi) / eps - (eps / rho) * state.lap_phi()


def capillary_divergence(phi: SpectralField, params: PhysParams) -> np.ndarray:
    """Capillary force ``-eps grad(phi) Lap(phi)`` as physical vector components.

    Equals the divergence of ``-eps (grad phi x grad phi - |grad phi|^2/2 I)``
    up to a gradient absorbed by the pressure.
    """
    g = phi.grid
    lap = g.inverse(-g.k2 * phi.coeffs)
    out = np.empty((g.dim,) + g.shape)
    for i in range(g.dim):
        out[i] = -params.epsilon * g.inverse(1j * g.kvec[i] * phi.coeffs) * lap
    return out


# ---------------------------------------------------------------------------
# Tendencies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tendency:
    """Time derivative of (sigma, u, phi) split into stiff and explicit parts.

    The stiff triple holds exactly the constant-coefficient dissipative terms
    (viscous Laplacian / grad-div for u, phase diffusion for phi); everything
    else, including the linear acoustic coupling, sits in the explicit triple.
    The two sum to the full right-hand side.
    """

    sigma_stiff: np.ndarray
    u_stiff: np.ndarray
    phi_stiff: np.ndarray
    sigma_explicit: np.ndarray
    u_explicit: np.ndarray
    phi_explicit: np.ndarray

    def total(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            self.sigma_stiff + self.sigma_explicit,
            self.u_stiff + self.u_explicit,
            self.phi_stiff + self.phi_explicit,
        )


def _check_input_state(state: State) -> None:
    for name, arr in (("sigma", state.sigma_hat), ("u", state.u_hat), ("phi", state.phi_hat)):
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation(name, "non-finite field passed to rhs")


def nonlinear_terms(state: State, params: PhysParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spectral tendencies of all nonlinear / variable-coefficient terms.

    Returns the triple (sigma, u, phi); the constant-coefficient linear part
    (acoustic coupling, viscosity, phase diffusion) is excluded so the time
    integrator can treat it exactly per mode.
    """
    g = state.grid
    d = g.dim
    nu, lam, eps, rb = params.nu, params.lam, params.epsilon, params.rho_bar

    sigma = state.sigma()
    u = state.u()
    phi = state.phi()
    rho = params.rho_bar + sigma
    if np.any(rho <= 0):
        raise VacuumError(f"vacuum reached (min rho = {rho.min():.6g})")

    kv = g.kvec
    ik = [1j * kv[i] for i in range(d)]
    div_u_hat = sum(ik[j] * state.u_hat[j] for j in range(d))

    # one batched inverse for every derivative this evaluation needs:
    # grad sigma (d), grad of each u_i (d*d), Lap u (d), grad div u (d),
    # grad phi (d), Lap phi (1)
    o = d + d * d
    buf = np.empty((o + 3 * d + 1,) + g.rshape, dtype=np.complex128)
    for i in range(d):
        np.multiply(ik[i], state.sigma_hat, out=buf[i])
        for j in range(d):
            np.multiply(ik[j], state.u_hat[i], out=buf[d + i * d + j])
        np.multiply(-g.k2, state.u_hat[i], out=buf[o + i])
        np.multiply(ik[i], div_u_hat, out=buf[o + d + i])
        np.multiply(ik[i], state.phi_hat, out=buf[o + 2 * d + i])
    np.multiply(-g.k2, state.phi_hat, out=buf[o + 3 * d])
    derivs = g.inverse_many(buf)
    grad_sigma = derivs[:d]
    grad_u = derivs[d:o].reshape((d, d) + g.shape)
    lap_u = derivs[o : o + d]
    grad_div_u = derivs[o + d : o + 2 * d]
    grad_phi = derivs[o + 2 * d : o + 3 * d]
    lap_phi = derivs[o + 3 * d]
    state._cache.setdefault("grad_phi", grad_phi)
    state._cache.setdefault("lap_phi", lap_phi)

    h1 = params.p_prime_bar / rb - pressure_prime(rho, params) / rho
    h2 = 1.0 / rb - 1.0 / rho

    phi2 = g.inverse(g.forward_product(phi * phi))
    reaction = (phi - phi2 * phi) / (eps * rho)

    # batched forward: sigma*u (d), u-equation explicit terms (d), phi explicit (1)
    products = np.empty((2 * d + 1,) + g.shape)
    for j in range(d):
        products[j] = sigma * u[j]
    for i in range(d):
        advect = sum(u[j] * grad_u[i][j] for j in range(d))
        visc_var = nu * lap_u[i] + (nu + lam) * grad_div_u[i]
        products[d + i] = (
            -advect + h1 * grad_sigma[i] - h2 * visc_var - (eps / rho) * grad_phi[i] * lap_phi
        )
    transport = sum(u[j] * grad_phi[j] for j in range(d))
    var_diff = (eps / rho**2 - eps / rb**2) * lap_phi
    products[2 * d] = -transport + var_diff + reaction
    hats = g.dealias(g.forward_many(products))

    n_sigma = np.zeros(g.rshape, dtype=np.complex128)
    for j in range(d):
        n_sigma -= ik[j] * hats[j]
    n_u = hats[d : 2 * d]
    n_phi = hats[2 * d]
    return n_sigma, n_u, n_phi


def linear_terms(state: State, params: PhysParams) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Constant-coefficient linear tendencies, split for the Tendency contract.

    Returns (sigma_acoustic, u_viscous, u_acoustic, phi_diffusion) pieces:
    the viscous block and phase diffusion are the stiff part, the acoustic
    coupling joins the explicit side.
    """
    g = state.grid
    d = g.dim
    kv = g.kvec
    nu, lam, rb = params.nu, params.lam, params.rho_bar

    div_u_hat = sum(1j * kv[j] * state.u_hat[j] for j in range(d))
    sigma_acoustic = -rb * div_u_hat

    u_visc = np.empty_like(state.u_hat)
    u_acoustic = np.empty_like(state.u_hat)
    for i in range(d):
        u_visc[i] = -(nu / rb) * g.k2 * state.u_hat[i] + ((nu + lam) / rb) * 1j * kv[i] * div_u_hat
        u_acoustic[i] = -(params.p_prime_bar / rb) * 1j * kv[i] * state.sigma_hat

    phi_diff = -(params.epsilon / rb**2) * g.k2 * state.phi_hat
    return sigma_acoustic, u_visc, u_acoustic, phi_diff


def rhs(state: State, params: PhysParams) -> Tendency:
    """Full right-hand side at a state, split into stiff and explicit parts."""
    _check_input_state(state)
    n_sigma, n_u, n_phi = nonlinear_terms(state, params)
    sigma_ac, u_visc, u_ac, phi_diff = linear_terms(state, params)
    zero = np.zeros(state.grid.rshape, dtype=np.complex128)
    return Tendency(
        sigma_stiff=zero,
        u_stiff=u_visc,
        phi_stiff=phi_diff,
        sigma_explicit=sigma_ac + n_sigma,
        u_explicit=u_ac + n_u,
        phi_explicit=n_phi,
    )


# ---------------------------------------------------------------------------
# Energy ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    """Components of the total free energy and its dissipation.

    ``total = kinetic + g_part + gradient_part + double_well`` and along exact
    dynamics ``d total/dt = -(diss_visc + diss_div + diss_mu)``.
    """

    kinetic: float
    g_part: float
    gradient_part: float
    double_well: float
    total: float
    diss_visc: float
    diss_div: float
    diss_mu: float


def total_energy(state: State, params: PhysParams) -> EnergyReport:
    """Energy ledger: ``int( rho|u|^2/2 + G(rho) + eps|grad phi|^2/2 + rho (phi^2-1)^2/(4 eps) )``.

    Dissipation terms: ``nu ||grad u||^2``, ``(nu+lambda) ||div u||^2`` and
    ``||mu||^2`` with the chemical potential mu.
    """
    g = state.grid
    V = g.volume
    u = state.u()
    sigma = state.sigma()
    phi = state.phi()
    rho = params.rho_bar + sigma

    kinetic = 0.5 * V * float(np.mean(rho * np.sum(u * u, axis=0)))
    g_part = V * float(np.mean(g_potential(rho, params)))
    gradient_part = 0.5 * params.epsilon * g.mode_sum_sq(state.phi_hat, order=1.0)
    double_well = V / (4.0 * params.epsilon) * float(np.mean(rho * (phi**2 - 1.0) ** 2))

    grad_u_sq = sum(g.mode_sum_sq(state.u_hat[i], order=1.0) for i in range(g.dim))
    div_u_hat = sum(1j * g.kvec[j] * state.u_hat[j] for j in range(g.dim))
    div_u_sq = g.mode_sum_sq(div_u_hat, order=0.0)
    mu = chemical_potential(state, params)
    mu_sq = V * float(np.mean(mu * mu))

    return EnergyReport(
        kinetic=kinetic,
        g_part=g_part,
        gradient_part=gradient_part,
        double_well=double_well,
        total=kinetic + g_part + gradient_part + double_well,
        diss_visc=params.nu * grad_u_sq,
        diss_div=(params.nu + params.lam) * div_u_sq,
        diss_mu=mu_sq,
    )
