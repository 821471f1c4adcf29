"""Observer-side functionals: energy ledger, level energies, negative norms,
invariant monitors and decay fitting.

All operations are read-only over immutable state snapshots and safe to run
concurrently with integration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EnergyReport, PhysParams, State, total_energy
from .oracle import DecayFit, fit_exponent
from .spectral import SpectralField, negative_norm


def energy_ledger(state: State, params: PhysParams) -> EnergyReport:
    """Energy components and dissipation terms for a snapshot."""
    return total_energy(state, params)


# ---------------------------------------------------------------------------
# Level energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelEnergy:
    """Squared norm combination tracked at derivative level ``l``.

    ``sigma_hk``/``u_hk`` hold ``||D^l .||^2`` measured through order ``3-l``
    above the base, ``phi_grad`` the same for the phase gradient through order
    ``2-l``, and ``phi_sq`` the plain squared norm of ``phi^2 - 1``. Their sum
    at ``l = 0`` is the boundedness functional of the global theory.
    """

    l: int
    sigma_hk: float
    u_hk: float
    phi_grad: float
    phi_sq: float

    @property
    def combined(self) -> float:
        return self.sigma_hk + self.u_hk + self.phi_grad + self.phi_sq


def _windowed_hk_sq(grid, coeffs, lo: int, hi: int) -> float:
    """``sum_{j=lo..hi} ||D^j f||^2`` via one pass over the mode magnitudes."""
    mag2 = (coeffs.real**2 + coeffs.imag**2) * grid.weight
    k2 = grid.k2
    total = 0.0
    pw = k2**lo if lo > 0 else np.ones_like(k2)
    for _ in range(lo, hi + 1):
        total += float(np.sum(pw * mag2))
        pw = pw * k2
    return grid.volume * total


def phi_sq_minus_one_hat(state: State) -> np.ndarray:
    """De-aliased coefficients of ``phi^2 - 1`` (cached on the snapshot)."""
    if "phisq_hat" not in state._cache:
        g = state.grid
        phi = state.phi()
        c = g.forward_product(phi * phi).copy()
        c[(0,) * g.dim] -= 1.0
        state._cache["phisq_hat"] = c
    return state._cache["phisq_hat"]


def level_energy(state: State, l: int) -> LevelEnergy:
    """Evaluate the level-``l`` norm combination spectrally."""
    if l not in (0, 1, 2):
        raise ValueError(f"level must be 0, 1 or 2, got {l}")
    g = state.grid
    sigma_hk = _windowed_hk_sq(g, state.sigma_hat, l, 3)
    u_hk = sum(_windowed_hk_sq(g, state.u_hat[i], l, 3) for i in range(g.dim))
    # ||D^(l+1) phi||^2 summed through total order 3 equals the gradient block
    phi_grad = _windowed_hk_sq(g, state.phi_hat, l + 1, 3)
    phi_sq = g.mode_sum_sq(phi_sq_minus_one_hat(state), order=0.0)
    return LevelEnergy(l=l, sigma_hk=sigma_hk, u_hk=u_hk, phi_grad=phi_grad, phi_sq=phi_sq)


# ---------------------------------------------------------------------------
# Negative-order functional
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NegativeFunctional:
    """The four squared negative-order norms controlling decay.

    On the torus each input is reduced to zero mean before applying the
    negative-order multiplier; the removed means are reported so nothing is
    silently discarded (``phi^2 - 1`` genuinely carries one for any
    perturbation of a pure phase).
    """

    s: float
    sigma_neg: float
    u_neg: float
    gradphi_neg: float
    phisq_neg: float
    total: float
    sigma_mean: float
    u_mean: tuple
    phisq_mean: float


def _neg_sq(grid, coeffs, s: float) -> tuple[float, float]:
    mean = grid.mean_value(coeffs)
    c = coeffs.copy()
    c[(0,) * grid.dim] = 0.0
    return negative_norm(SpectralField(grid, c), s) ** 2, mean


def negative_functional(state: State, s: float) -> NegativeFunctional:
    if not (0.0 < s < 1.5):
        raise ValueError(f"s must lie in (0, 1.5), got {s}")
    g = state.grid
    sigma_neg, sigma_mean = _neg_sq(g, state.sigma_hat, s)
    u_neg = 0.0
    u_mean = []
    for i in range(g.dim):
        part, mean = _neg_sq(g, state.u_hat[i], s)
        u_neg += part
        u_mean.append(mean)
    gradphi_neg = 0.0
    for i in range(g.dim):
        part, _ = _neg_sq(g, 1j * g.kvec[i] * state.phi_hat, s)
        gradphi_neg += part
    phisq_neg, phisq_mean = _neg_sq(g, phi_sq_minus_one_hat(state), s)
    total = sigma_neg + u_neg + gradphi_neg + phisq_neg
    return NegativeFunctional(
        s=s,
        sigma_neg=sigma_neg,
        u_neg=u_neg,
        gradphi_neg=gradphi_neg,
        phisq_neg=phisq_neg,
        total=total,
        sigma_mean=sigma_mean,
        u_mean=tuple(u_mean),
        phisq_mean=phisq_mean,
    )


# ---------------------------------------------------------------------------
# Invariant monitor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantReport:
    """Snapshot health report; ``clean`` means every monitor is quiet."""

    mass: float
    mass_drift: float | None
    phi_max: float
    phi_excess: float
    phi_excess_location: tuple | None
    rho_min: float
    rho_max: float
    rho_window_violation: float
    rho_violation_location: tuple | None
    nan_fields: tuple

    @property
    def clean(self) -> bool:
        ok = self.phi_excess <= 1e-6 and self.rho_window_violation <= 0 and not self.nan_fields
        if self.mass_drift is not None:
            ok = ok and abs(self.mass_drift) <= 1e-12
        return ok


def invariant_monitor(
    state: State, params: PhysParams | None = None, mass_reference: float | None = None
) -> InvariantReport:
    """Report mass, phase bound, density window and NaN status of a snapshot."""
    params = params if params is not None else PhysParams()
    nan_fields = []
    for name, arr in (("sigma", state.sigma_hat), ("u", state.u_hat), ("phi", state.phi_hat)):
        if not np.all(np.isfinite(arr)):
            nan_fields.append(name)
    mass = state.mass(params)
    drift = None
    if mass_reference is not None:
        drift = (mass - mass_reference) / max(abs(mass_reference), 1e-300)

    phi = state.phi()
    phi_max = float(np.max(np.abs(phi)))
    excess = max(phi_max - 1.0, 0.0)
    phi_loc = None
    if excess > 0:
        phi_loc = tuple(int(i) for i in np.unravel_index(int(np.argmax(np.abs(phi))), phi.shape))

    rho = params.rho_bar + state.sigma()
    rho_min, rho_max = float(rho.min()), float(rho.max())
    low = 0.5 * params.rho_bar - rho_min
    high = rho_max - 2.0 * params.rho_bar
    violation = max(low, high, 0.0)
    rho_loc = None
    if violation > 0:
        idx = np.argmin(rho) if low >= high else np.argmax(rho)
        rho_loc = tuple(int(i) for i in np.unravel_index(int(idx), rho.shape))

    return InvariantReport(
        mass=mass,
        mass_drift=drift,
        phi_max=phi_max,
        phi_excess=excess,
        phi_excess_location=phi_loc,
        rho_min=rho_min,
        rho_max=rho_max,
        rho_window_violation=violation,
        rho_violation_location=rho_loc,
        nan_fields=tuple(nan_fields),
    )


# ---------------------------------------------------------------------------
# Decay fitting against the expected exponent
# ---------------------------------------------------------------------------

#: r^2 below which a window is considered contaminated (e.g. by the
#: exponential tail a finite box develops once the spectral gap bites).
R2_MIN = 0.98


def decay_suite(
    t,
    values,
    l: int,
    s: float,
    tol: float,
    window: tuple[float, float] | None = None,
    r2_min: float = R2_MIN,
) -> DecayFit:
    """Fit a series and compare the slope against the expected ``-(l+s)``.

    A fit with ``r2 < r2_min`` fails regardless of the slope: a low ``r2``
    over a decade is the signature of non-power behavior and must surface
    rather than be averaged through.
    """
    t = np.asarray(t, dtype=np.float64)
    if window is None:
        window = (float(t.min()), float(t.max()))
    fit = fit_exponent(t, values, window)
    target = -(l + s)
    passed = abs(fit.exponent - target) <= tol and fit.r2 >= r2_min
    return DecayFit(
        exponent=fit.exponent,
        prefactor=fit.prefactor,
        r2=fit.r2,
        window=fit.window,
        n_samples=fit.n_samples,
        target=target,
        tol=tol,
        passed=passed,
    )
