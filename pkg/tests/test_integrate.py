import numpy as np
import pytest

from nsac import Grid, PhysParams, State, StepConfig, adaptive_dt, run, step
from nsac.config import ICSpec, RunConfig
from nsac.diagnostics import energy_ledger
from nsac.initial import make_initial

from conftest import random_admissible_state


class TestStepConfig:
    @pytest.mark.parametrize(
        "kwargs,msg",
        [
            (dict(dt=0.0, t_end=1.0), "dt"),
            (dict(dt=0.1, t_end=1.0, cfl=1.5), "cfl"),
            (dict(dt=0.1, t_end=1.0, scheme_order=3), "scheme_order"),
        ],
    )
    def test_validation(self, kwargs, msg):
        with pytest.raises(ValueError, match=msg):
            StepConfig(**kwargs)


class TestStep:
    @pytest.mark.parametrize("order", [1, 2])
    def test_equilibrium_fixed_point(self, grid16, params, order):
        cfg = StepConfig(dt=0.05, t_end=1.0, scheme_order=order)
        state = State.equilibrium(grid16)
        new = step(state, cfg, params)
        assert new.t == pytest.approx(0.05)
        assert np.array_equal(new.sigma_hat, state.sigma_hat)
        assert np.array_equal(new.u_hat, state.u_hat)
        assert np.array_equal(new.phi_hat, state.phi_hat)

    @pytest.mark.parametrize("shift", [True, False])
    def test_phase_relaxation_rate(self, params, shift):
        # sigma = u = 0, phi = 1 + delta sin(x): mode amplitude decays like
        # exp(-(eps/rho_bar^2 + 2/(eps rho_bar)) t) up to O(dt^2) + O(delta)
        grid = Grid(dim=3, n=8, length=2 * np.pi)
        delta = 1e-6
        x = grid.meshgrid()[0]
        phi = 1.0 - delta + delta * np.sin(x)  # keep phi <= 1 pointwise
        state0 = State.from_physical(
            grid, 0.0, np.zeros(grid.shape), np.zeros((3,) + grid.shape), phi
        )
        rate = params.epsilon / params.rho_bar**2 + 2.0 / (params.epsilon * params.rho_bar)
        T = 0.2
        errors = []
        for dt in (0.01, 0.005):
            cfg = StepConfig(dt=dt, t_end=T, scheme_order=2, reaction_shift=shift)
            state = state0
            for _ in range(round(T / dt)):
                state = step(state, cfg, params)
            amp = 2.0 * abs(state.phi_hat[(1, 0, 0)])
            exact = delta * np.exp(-rate * T)
            errors.append(abs(amp - exact) / (delta * np.exp(-rate * T)))
        # second order: halving dt cuts the defect by about 4 (allow slack for
        # the O(delta) nonlinear floor); the explicit-reaction variant carries
        # a larger constant since dt times the reaction rate is not small
        assert errors[0] <= (1e-2 if shift else 5e-2)
        assert errors[1] <= errors[0] / 2.5 + 1e-5

    def test_post_step_phase_bound_enforced(self, grid16, params):
        cfg = StepConfig(dt=0.01, t_end=1.0, phi_tol=1e-12)
        phi = np.full(grid16.shape, 1.01)
        state = State.from_physical(grid16, 0.0, np.zeros(grid16.shape), np.zeros((3,) + grid16.shape), phi)
        from nsac.errors import InvariantViolation

        with pytest.raises(InvariantViolation, match="phi"):
            step(state, cfg, params)


class TestAdaptiveDt:
    def test_quiescent_bound(self, grid16, params):
        cfg = StepConfig(dt=10.0, t_end=1.0)
        state = State.equilibrium(grid16)
        expected = cfg.cfl * grid16.dx / np.sqrt(params.p_prime_bar)
        assert adaptive_dt(state, cfg, params) == pytest.approx(expected, rel=1e-12)

    def test_config_cap(self, grid16, params):
        cfg = StepConfig(dt=1e-4, t_end=1.0)
        state = State.equilibrium(grid16)
        assert adaptive_dt(state, cfg, params) == 1e-4

    def test_doubling_speed_halves_binding_bound(self, grid16, params):
        cfg = StepConfig(dt=10.0, t_end=1.0)
        cs = np.sqrt(params.p_prime_bar)
        u1 = np.zeros((3,) + grid16.shape)
        u1[0] = 100.0 * cs
        s1 = State.from_physical(grid16, 0.0, np.zeros(grid16.shape), u1, np.ones(grid16.shape))
        s2 = State.from_physical(grid16, 0.0, np.zeros(grid16.shape), 2 * u1, np.ones(grid16.shape))
        ratio = adaptive_dt(s2, cfg, params) / adaptive_dt(s1, cfg, params)
        assert ratio == pytest.approx(0.5, abs=0.01)

    def test_random_state_positive_and_capped(self, grid16, params):
        rng = np.random.default_rng(20)
        state = random_admissible_state(rng, grid16)
        cfg = StepConfig(dt=0.3, t_end=1.0)
        dt = adaptive_dt(state, cfg, params)
        assert 0 < dt <= cfg.dt


class TestRun:
    def test_zero_duration(self, grid16, params):
        cfg = StepConfig(dt=0.1, t_end=0.0)
        summary = run(State.equilibrium(grid16), cfg, params)
        assert summary.steps == 0
        assert summary.termination == "t_end"

    def test_equilibrium_observer_records_identical(self, grid16, params):
        cfg = StepConfig(dt=0.01, t_end=1.0)
        records = []
        run(State.equilibrium(grid16), cfg, params, observers=(lambda i, s: records.append(
            (energy_ledger(s, params).total, s.mass(params))),))
        assert len(records) >= 100
        assert all(r == records[0] for r in records)

    def test_lands_exactly_on_t_end(self, grid16, params):
        cfg = StepConfig(dt=0.03, t_end=0.1)
        holder = {}
        summary = run(State.equilibrium(grid16), cfg, params, observers=(lambda i, s: holder.update(t=s.t),))
        assert summary.t_final == 0.1
        assert holder["t"] == 0.1

    def test_max_steps_cap(self, grid16, params):
        cfg = StepConfig(dt=1e-4, t_end=10.0, max_steps=5)
        summary = run(State.equilibrium(grid16), cfg, params)
        assert summary.termination == "max_steps"
        assert summary.steps == 5

    def test_cadence(self, grid16, params):
        cfg = StepConfig(dt=0.01, t_end=0.1)
        hits = []
        run(State.equilibrium(grid16), cfg, params, observers=(lambda i, s: hits.append(i),), cadence=5)
        assert hits[0] == 0
        assert all(i % 5 == 0 or i == hits[-1] for i in hits)

    def test_window_violation_recorded(self, params):
        # density starts just inside the window; a compressive velocity pushes
        # it out within a few steps
        grid = Grid(dim=3, n=16, length=2 * np.pi)
        x = grid.meshgrid()[0]
        sigma = -0.45 - 0.04 * np.cos(x)
        u = np.zeros((3,) + grid.shape)
        u[0] = np.sin(x)
        state = State.from_physical(grid, 0.0, sigma, u, np.ones(grid.shape))
        cfg = StepConfig(dt=5e-3, t_end=2.0)
        summary = run(state, cfg, params)
        assert summary.termination == "invariant_violation"
        assert summary.violation["field"] == "rho"
        assert summary.violation["step"] is not None


class TestConservation:
    def test_mass_conserved_over_many_steps(self, params):
        grid = Grid(dim=3, n=8, length=2 * np.pi)
        cfg = RunConfig(
            grid=grid,
            phys=params,
            step=StepConfig(dt=5e-3, t_end=1.5, scheme_order=2),
            ic=ICSpec(kind="random_perturbation", delta=1e-2, max_mode=2, seed=3),
        )
        state = make_initial(cfg)
        masses = []
        summary = run(state, cfg.step, params, observers=(lambda i, s: masses.append(s.mass(params)),))
        assert summary.steps >= 300
        drift = max(abs(m - masses[0]) / abs(masses[0]) for m in masses)
        assert drift <= 1e-12

    def test_energy_monotone_and_phase_bounded(self, params):
        grid = Grid(dim=3, n=16, length=2 * np.pi)
        cfg = RunConfig(
            grid=grid,
            phys=params,
            step=StepConfig(dt=0.02, t_end=2.0, scheme_order=2),
            ic=ICSpec(kind="random_perturbation", delta=1e-2, max_mode=3, seed=4),
        )
        state = make_initial(cfg)
        energies, phimax = [], []

        def obs(_i, s):
            energies.append(energy_ledger(s, params).total)
            phimax.append(float(np.max(np.abs(s.phi()))))

        summary = run(state, cfg.step, params, observers=(obs,))
        assert summary.termination == "t_end"
        e = np.asarray(energies)
        assert np.all(np.diff(e) <= 1e-10 * e[0])
        assert max(phimax) <= 1.0 + 1e-6


def observed_order(params, scheme_order, amplitude=0.05, n=16, t_end=0.5, dt=0.02):
    """Richardson-style order estimate against a dt/16 reference trajectory."""
    grid = Grid(dim=3, n=n, length=2 * np.pi)
    cfg0 = RunConfig(
        grid=grid,
        phys=params,
        step=StepConfig(dt=dt, t_end=t_end, scheme_order=scheme_order),
        ic=ICSpec(kind="manufactured", amplitude=amplitude),
    )
    state0 = make_initial(cfg0)

    def final_state(step_dt):
        holder = {}
        cfg = StepConfig(dt=step_dt, t_end=t_end, scheme_order=scheme_order)
        summary = run(state0, cfg, params, observers=(lambda i, s: holder.update(s=s),), cadence=10**9)
        assert summary.termination == "t_end"
        return holder["s"]

    ref = final_state(dt / 16)

    def err(state):
        out = 0.0
        for a, b in (
            (state.sigma_hat, ref.sigma_hat),
            (state.u_hat, ref.u_hat),
            (state.phi_hat, ref.phi_hat),
        ):
            out = max(out, float(np.max(np.abs(a - b))))
        return out

    e1 = err(final_state(dt))
    e2 = err(final_state(dt / 2))
    return np.log2(e1 / e2)


class TestTemporalConvergence:
    def test_second_order(self, params):
        order = observed_order(params, scheme_order=2)
        assert order >= 1.8

    def test_first_order(self, params):
        order = observed_order(params, scheme_order=1)
        assert order >= 0.8
