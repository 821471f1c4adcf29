"""Exact evolution of the constant-coefficient linearization on whole space.

Linearized around the quiescent single-phase state, the system decouples in
Fourier space into

* a scalar heat flow for the phase field, ``phi_hat' = -(eps/rho_bar^2)|k|^2 phi_hat``,
* an acoustic block coupling ``sigma_hat`` with the velocity:
  ``sigma_hat' = -i rho_bar k . u_hat`` and
  ``u_hat' = -(nu/rho_bar)|k|^2 u_hat - ((nu+lam)/rho_bar) k (k.u_hat)
  - i (p'(rho_bar)/rho_bar) k sigma_hat``.

Splitting the velocity into components parallel and transverse to ``k``
reduces the block to a 2x2 longitudinal system plus scalar transverse decay,
so squared derivative norms on R^3 become radial integrals

    N_l(t) = 4 pi * int r^(2l+2) |amplification(t, r)|^2 a(r)^2 dr

over the radial data profile ``a``. These integrals are the ground truth the
nonlinear solver's decay diagnostics are checked against: data whose profile
behaves like ``r^(s-3/2)`` near the origin yields ``N_l(t) ~ t^-(l+s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import QuadratureError
from .model import PhysParams

QUADRATURE_RTOL = 1e-8
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class SymbolBlock:
    """Linear evolution operator at one wavenumber.

    ``acoustic`` is the (1+dim)x(1+dim) matrix acting on (sigma_hat, u_hat);
    ``phase_factor`` is the scalar rate multiplying phi_hat.
    """

    k: np.ndarray
    acoustic: np.ndarray
    phase_factor: float


def build_symbol(k, params: PhysParams) -> SymbolBlock:
    """Assemble the per-mode linear operator; the zero mode is conserved."""
    k = np.asarray(k, dtype=np.float64)
    d = k.size
    rb = params.rho_bar
    A = np.zeros((1 + d, 1 + d), dtype=np.complex128)
    k2 = float(k @ k)
    if k2 > 0:
        A[0, 1:] = -1j * rb * k
        A[1:, 0] = -1j * (params.p_prime_bar / rb) * k
        A[1:, 1:] = -(params.nu / rb) * k2 * np.eye(d) - ((params.nu + params.lam) / rb) * np.outer(k, k)
    phase = -(params.epsilon / rb**2) * k2
    return SymbolBlock(k=k, acoustic=A, phase_factor=phase)


def evolve_mode(block: SymbolBlock, init: np.ndarray, t: float) -> np.ndarray:
    """Apply ``exp(t A)`` to ``(sigma_hat, u_hat)`` and the heat factor to ``phi_hat``.

    ``init`` stacks the amplitudes as ``[sigma, u_1..u_d, phi]``.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    init = np.asarray(init, dtype=np.complex128)
    n_acu = block.acoustic.shape[0]
    if init.size != n_acu + 1:
        raise ValueError(f"expected {n_acu + 1} amplitudes, got {init.size}")
    out = np.empty_like(init)
    out[:n_acu] = expm(t * block.acoustic) @ init[:n_acu]
    out[n_acu] = np.exp(block.phase_factor * t) * init[n_acu]
    return out


# ---------------------------------------------------------------------------
# Radial data profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataProfile:
    """Radial spectral amplitude ``a(r)`` of the initial data, supported on r <= 1.

    ``kind='l1'`` is the flat profile ``a = 1`` on the unit ball (the endpoint
    case, squared norms decaying like ``t^-(l+3/2)``). ``kind='power'`` shapes
    ``a = r^(s - 3/2 + margin)``, which puts the data just inside the
    negative-order space of index ``s`` and produces ``t^-(l+s+margin)``.
    """

    s: float
    kind: str = "power"
    margin: float = 0.01

    def __post_init__(self):
        if self.kind not in ("l1", "power"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not (0.0 <= self.s < 1.5):
            raise ValueError(f"regularity index s must lie in [0, 1.5), got {self.s}")
        if self.kind == "power" and not self.margin > 0:
            raise ValueError("power profile needs a positive margin")
        # finiteness of int |k|^(-2s) a^2 dk near the origin
        if 2.0 - 2.0 * self.s + 2.0 * self.beta <= -1.0:
            raise ValueError("profile is not in the requested negative-order space")

    @property
    def beta(self) -> float:
        return 0.0 if self.kind == "l1" else self.s - 1.5 + self.margin

    def amplitude(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        inside = r <= 1.0
        if self.kind == "l1":
            return inside.astype(np.float64)
        with np.errstate(divide="ignore"):
            a = np.where(r > 0, r, 1.0) ** self.beta
        at_zero = 1.0 if self.beta == 0 else 0.0
        return np.where(inside & (r > 0), a, np.where(inside, at_zero, 0.0))


# ---------------------------------------------------------------------------
# Closed-form 2x2 longitudinal propagator, vectorized over radius
# ---------------------------------------------------------------------------


def _longitudinal_propagator(r: np.ndarray, t: float, params: PhysParams):
    """Entries of ``exp(t A2)`` for the 2x2 block at radius r.

    ``A2 = [[0, -i rho_bar r], [-i p'(rho_bar)/rho_bar r, -b r^2]]`` with
    ``b = (2 nu + lam)/rho_bar``. With eigenvalue mean ``m = -b r^2 / 2`` and
    half-spread ``delta``, the exponential is assembled from
    ``e^(mt) cosh(delta t)`` and ``e^(mt) sinh(delta t)/delta``, each built
    from ``exp((m +- delta) t)`` whose real parts are nonpositive, so nothing
    overflows however stiff the mode.
    """
    b = (2.0 * params.nu + params.lam) / params.rho_bar
    c = params.p_prime_bar
    r = np.asarray(r, dtype=np.float64)
    m = -0.5 * b * r**2 + 0j
    delta = np.sqrt(m**2 - c * r**2 + 0j)
    ep = np.exp((m + delta) * t)
    em = np.exp((m - delta) * t)
    C = 0.5 * (ep + em)
    small = np.abs(delta * t) < 1e-6
    delta_safe = np.where(small, 1.0, delta)
    z2 = (delta * t) ** 2
    S = np.where(
        small,
        np.exp(m * t) * t * (1.0 + z2 / 6.0 * (1.0 + z2 / 20.0)),
        (ep - em) / (2.0 * delta_safe),
    )
    e11 = C - S * m
    e12 = S * (-1j * params.rho_bar * r)
    e21 = S * (-1j * (c / params.rho_bar) * r)
    e22 = C + S * m
    return e11, e12, e21, e22


def _decay_envelope(t: float, component: str, params: PhysParams):
    """Smooth part of the integrand: squared amplification factor at radius r.

    The power-law weight ``r^(2l+2) a(r)^2 = r^p`` is kept separate so the
    quadrature can treat its singularity at the origin exactly.
    """

    def g(r: np.ndarray) -> np.ndarray:
        if component == "phi":
            return np.exp(-2.0 * (params.epsilon / params.rho_bar**2) * r**2 * t)
        e11, e12, e21, e22 = _longitudinal_propagator(r, t, params)
        if component == "sigma":
            return np.abs(e11 + e12) ** 2
        if component == "u":
            long2 = np.abs(e21 + e22) ** 2
            trans2 = 2.0 * np.exp(-2.0 * (params.nu / params.rho_bar) * r**2 * t)
            return long2 + trans2
        raise ValueError(f"unknown component {component!r}; use sigma, u or phi")

    return g


_JACOBI_CACHE: dict[float, tuple[np.ndarray, np.ndarray]] = {}


def _jacobi_rule(p: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Jacobi nodes/weights for ``(1+x)^p`` on [-1, 1] (alpha = 0)."""
    if p not in _JACOBI_CACHE:
        from scipy.special import roots_jacobi

        _JACOBI_CACHE[p] = roots_jacobi(24, 0.0, p)
    return _JACOBI_CACHE[p]


def _adaptive_radial(g, p: float, t: float, rate: float, rtol: float = QUADRATURE_RTOL) -> float:
    """Adaptive quadrature of ``r^p g(r)`` over ``[0, 1]`` with ``p > -1``.

    The origin panel uses Gauss-Jacobi quadrature matched to the ``r^p``
    weight (exact however weak the integrability); the rest is composite
    Gauss-Legendre on a ladder graded around the diffusive scale
    ``1/sqrt(rate*t)``. Refinement shrinks the origin panel and doubles the
    subdivision until the value is stable to ``rtol``.
    """
    if p <= -1.0:
        raise ValueError(f"radial weight exponent must exceed -1, got {p}")
    r_eff = min(1.0, 1.0 / np.sqrt(max(rate * t, 1.0)))
    xj, wj = _jacobi_rule(p)

    def evaluate(n_sub: int, shrink: int) -> float:
        first = r_eff / (4.0 * shrink)
        # origin panel [0, first]: int r^p g = (first/2)^(p+1) * sum wj g(nodes)
        nodes0 = first * 0.5 * (1.0 + xj)
        total = (first / 2.0) ** (p + 1.0) * float(np.sum(wj * g(nodes0)))
        edges = [first]
        scale = first
        while edges[-1] < 1.0:
            scale *= 1.6
            edges.append(min(1.0, edges[-1] + scale))
        edges = np.asarray(edges)
        for lo, hi in zip(edges[:-1], edges[1:]):
            sub = np.linspace(lo, hi, n_sub + 1)
            mid = 0.5 * (sub[:-1] + sub[1:])[:, None]
            half = 0.5 * (sub[1:] - sub[:-1])[:, None]
            nodes = mid + half * _GAUSS_NODES[None, :]
            vals = nodes**p * g(nodes.ravel()).reshape(nodes.shape)
            total += float(np.sum(half * vals * _GAUSS_WEIGHTS[None, :]))
        return total

    prev = evaluate(1, 1)
    curr = prev
    for n_sub, shrink in ((2, 2), (4, 4), (8, 8), (16, 16), (32, 32), (64, 64)):
        curr = evaluate(n_sub, shrink)
        if abs(curr - prev) <= rtol * max(abs(curr), 1e-300):
            return curr
        prev = curr
    raise QuadratureError("radial quadrature did not converge", residual=abs(curr - prev))


def decay_norm(
    l: int,
    s: float,
    t: float,
    profile: DataProfile,
    component: str,
    params: PhysParams,
) -> float:
    """Squared derivative norm ``4 pi int r^(2l+2) |w_hat(t, r)|^2 dr`` on R^3.

    Each field starts from the profile amplitude (velocity: one longitudinal
    plus two transverse polarizations). At ``t = 0`` this is the plain squared
    data norm; it decreases in ``t`` and its log-log slope against ``1 + t``
    is the decay exponent under test.
    """
    if not (0 <= l <= 3):
        raise ValueError(f"derivative order l must lie in [0, 3], got {l}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if abs(profile.s - s) > 1e-12:
        raise ValueError(f"profile was built for s = {profile.s}, requested s = {s}")
    g = _decay_envelope(t, component, params)
    p = 2.0 * l + 2.0 + 2.0 * profile.beta
    if component == "phi":
        rate = 2.0 * params.epsilon / params.rho_bar**2
    else:
        rate = (2.0 * params.nu + params.lam) / params.rho_bar
    return 4.0 * np.pi * _adaptive_radial(g, p, t, rate)


# ---------------------------------------------------------------------------
# Decay-exponent fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    """Least-squares power-law fit ``value ~ prefactor * (1+t)^exponent``.

    ``target``/``passed`` are filled by the diagnostics layer when the fit is
    compared against an expected exponent; ``r2`` near one certifies that the
    window is still in the algebraic regime (an exponential tail drags it
    down, which is how contaminated windows are flagged).
    """

    exponent: float
    prefactor: float
    r2: float
    window: tuple[float, float]
    n_samples: int
    target: float | None = None
    tol: float | None = None
    passed: bool | None = None

    def as_dict(self) -> dict:
        out = {
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "r2": self.r2,
            "window": list(self.window),
            "n_samples": self.n_samples,
        }
        if self.target is not None:
            out.update(target=self.target, tol=self.tol, passed=bool(self.passed))
        return out


def fit_exponent(t, values, window: tuple[float, float]) -> DecayFit:
    """Fit ``log(values)`` against ``log(1+t)`` over the window.

    Requires at least 10 strictly positive samples inside the window.
    """
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if int(np.count_nonzero(sel)) < 10:
        raise ValueError(f"need at least 10 samples in window [{lo}, {hi}], got {np.count_nonzero(sel)}")
    v = values[sel]
    if np.any(v <= 0):
        raise ValueError("series must be strictly positive inside the fit window")
    x = np.log1p(t[sel])
    y = np.log(v)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return DecayFit(
        exponent=float(slope),
        prefactor=float(np.exp(intercept)),
        r2=float(r2),
        window=(float(lo), float(hi)),
        n_samples=int(np.count_nonzero(sel)),
    )
