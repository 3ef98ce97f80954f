import numpy as np
import pytest

from relaxnls.exceptions import ConfigurationError, CriticalMassError
from relaxnls.experiments import choose_timestep, soliton_problem, zero_problem
from relaxnls.fem_core import BandedLU, BandedMatrix, SplineFun, l2_project
from relaxnls.nls_stepper import (
    ProblemSpec,
    TimeGrid,
    cn_step,
    compute_W,
    init_state,
    phi_update,
    run,
)
from relaxnls.spline_mesh import build_space


@pytest.fixture(scope="module")
def sol():
    return soliton_problem()


@pytest.fixture(scope="module")
def space2400():
    return build_space(-30, 30, 2400, 2)


def advance(state, n):
    state.n = n
    phi_update(state, n)
    cn_step(state, n)
    out = compute_W(state, n)
    return out


def test_problem_validation():
    u0 = lambda x: np.zeros_like(x, dtype=complex)
    for kw in ({"p": 0.4}, {"p": 2.5}, {"alpha": 0.0}, {"T": 0.0}, {"a": 1.0, "b": 0.0}):
        args = dict(p=1.0, alpha=1.0, lam=1.0, a=0.0, b=1.0, T=1.0, u0=u0)
        args.update(kw)
        with pytest.raises(ConfigurationError):
            ProblemSpec(**args)


def test_time_grid():
    g = TimeGrid.uniform(1.0, 252)
    assert g.N == 252 and abs(g.k.sum() - 1.0) <= 1e-12
    assert g.ratio_const == pytest.approx(1.0)
    g2 = TimeGrid(np.array([0.0, 0.1, 0.3, 0.4]))
    assert g2.ratio_const == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        TimeGrid(np.array([0.0, 0.2, 0.2]))
    with pytest.raises(ConfigurationError):
        TimeGrid.uniform(1.0, 0)


def test_init_zero():
    pr = zero_problem()
    st = init_state(pr, build_space(-30, 30, 120, 2), TimeGrid.uniform(1, 4))
    assert np.all(st.U.coeffs == 0) and np.all(st.Phi_prev == 0)


def test_init_soliton(sol, space2400):
    st = init_state(sol, space2400, TimeGrid.uniform(1, 252))
    mass = st.disc.l2(st.U.q0)
    assert abs(mass - 1.414214) <= 1e-4
    assert np.abs(st.Phi_prev.imag).max() <= 1e-12


def test_critical_mass_refused():
    pr = ProblemSpec(2.0, 1.0, 1.0, -30, 30, 1.0, lambda x: 2 / np.cosh(x))
    with pytest.raises(CriticalMassError):
        init_state(pr, build_space(-30, 30, 120, 2), TimeGrid.uniform(1, 4))


def test_grid_problem_mismatch(sol):
    with pytest.raises(ConfigurationError):
        init_state(sol, build_space(-30, 30, 120, 2), TimeGrid.uniform(2, 4))
    with pytest.raises(ConfigurationError):
        init_state(sol, build_space(-20, 30, 120, 2), TimeGrid.uniform(1, 4))


def test_phi_update_uniform_formula(sol):
    sp = build_space(-30, 30, 600, 2)
    st = init_state(sol, sp, TimeGrid.uniform(1, 10))
    phi_prev = st.Phi_prev.copy()
    phi = phi_update(st, 0)
    proj = st.disc.project_values(np.abs(st.U.q0) ** 2)
    assert np.allclose(phi, 2 * proj - phi_prev, atol=1e-13)


def test_phi_first_step_close_to_projection(sol, space2400):
    st = init_state(sol, space2400, TimeGrid.uniform(1, 252))
    direct = l2_project(space2400, lambda x: np.abs(sol.u0(x)) ** 2).coeffs
    phi = phi_update(st, 0)
    assert np.abs(phi - direct).max() <= 1e-6


def test_phi_variable_steps():
    pr = soliton_problem()
    sp = build_space(-30, 30, 300, 2)
    t = np.array([0.0, 0.2, 0.5, 1.0])
    st = init_state(pr, sp, TimeGrid(t))
    advance(st, 0)
    st.Phi_prev, st.U = st.Phi_half, st.U_next
    prev = st.Phi_prev.copy()
    phi = phi_update(st, 1)
    k, kp = 0.3, 0.2
    proj = st.disc.project_values(np.abs(st.U.q0) ** 2)
    assert np.allclose(phi, (k + kp) / kp * proj - k / kp * prev, atol=1e-12)


def test_zero_state_stays_zero():
    pr = zero_problem()
    st = init_state(pr, build_space(-30, 30, 120, 2), TimeGrid.uniform(1, 4))
    Wl, Wr, dW, _ = advance(st, 0)
    assert np.all(st.Phi_half == 0) and np.all(st.U_next.coeffs == 0)
    assert np.all(Wl == 0) and np.all(Wr == 0) and np.all(dW == 0)


def test_linear_case_is_crank_nicolson():
    pr = soliton_problem(p=1.0, alpha=1.0, lam=0.0)
    sp = build_space(-30, 30, 300, 2)
    st = init_state(pr, sp, TimeGrid.uniform(1, 20))
    k = 0.05
    Wl, Wr, dW, _ = advance(st, 0)
    M, S = st.disc.mass, st.disc.stiffness
    lhs = BandedMatrix(M.data / k + 0.5j * S.data, M.bw)
    rhs = BandedMatrix(M.data / k - 0.5j * S.data, M.bw)
    ref = BandedLU(lhs).solve(rhs @ st.U.coeffs)
    assert np.allclose(st.U_next.coeffs, ref, atol=1e-13)
    dU = (st.U_next.coeffs - st.U.coeffs) / k
    assert np.allclose(dW, 1j * st.disc.laplacian(dU), atol=1e-9 * np.abs(dW).max())


def test_one_step_mass_and_midpoint(sol, space2400):
    st = init_state(sol, space2400, TimeGrid.uniform(1, 252))
    Wl, Wr, dW, _ = advance(st, 0)
    m0 = st.disc.l2(st.U.q0)
    m1 = st.disc.l2(st.disc.values(st.U_next.coeffs))
    assert abs(m1 - m0) <= 1e-11 * m0
    k = 1 / 252
    lhs = (st.U_next.coeffs - st.U.coeffs) / k
    mid = 0.5 * (Wl + Wr)
    err = st.disc.l2(st.disc.values(lhs - mid))
    assert err <= 1e-9 * st.disc.l2(st.disc.values(Wr))


def test_run_invariants():
    pr = soliton_problem()
    sp = build_space(-30, 30, 600, 2)
    N = choose_timestep(600, 2)
    seen = []

    def check(rec):
        U0, U1 = rec.U_n.coeffs, rec.U_np1.coeffs
        mid = (U1 - U0) / rec.k_n - 0.5 * (rec.W_left.coeffs + rec.W_right.coeffs)
        seen.append(np.abs(mid).max() / np.abs(rec.W_right.coeffs).max())
        assert np.abs(rec.Phi_half.coeffs.imag).max() <= 1e-10

    res = run(pr, sp, TimeGrid.uniform(1, N), on_step=check)
    assert len(res.records) == N == len(seen)
    mass = res.diagnostics["mass"]
    assert np.abs(mass - mass[0]).max() / mass[0] <= 1e-10
    assert res.diagnostics["phi_imag_max"] <= 1e-10
    assert max(seen) <= 1e-9
    assert res.records[0].U_n is not None  # history kept
    assert res.E_exact > 0


def test_run_zero_records():
    res = run(zero_problem(), build_space(-30, 30, 60, 2), TimeGrid.uniform(1, 3))
    for rec in res.records:
        assert np.all(rec.U_np1.coeffs == 0) and np.all(rec.dbarW.coeffs == 0)
    assert res.E_exact == 0


def test_energy_drift_vanishes_under_refinement():
    pr = soliton_problem()
    drift = []
    for M in (600, 1200):
        sp = build_space(-30, 30, M, 2)
        res = run(pr, sp, TimeGrid.uniform(1, choose_timestep(M, 2)), keep_history=False)
        e = res.diagnostics["energy"]
        drift.append(np.abs(e - e[0]).max())
    assert drift[1] < drift[0]


def test_second_order_in_time():
    pr = soliton_problem()
    sp = build_space(-30, 30, 4800, 3)
    errs = [run(pr, sp, TimeGrid.uniform(1, N), keep_history=False).diagnostics["error"][-1] for N in (10, 20)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_extended_stepping_matches_double(sol):
    sp = build_space(-30, 30, 600, 2)
    grid = TimeGrid.uniform(1, 40)
    a = run(sol, sp, grid, keep_history=False)
    b = run(sol, sp, grid, keep_history=False, extended=True)
    assert np.abs(a.UN.coeffs - b.UN.coeffs).max() < 1e-11
    assert np.allclose(a.diagnostics["error"], b.diagnostics["error"], rtol=1e-8)


def test_extended_dbarW_is_the_W_difference(sol, space2400):
    st = init_state(sol, space2400, TimeGrid.uniform(1, 252), extended=True)
    W_left, W_right, dbarW, _ = advance(st, 0)
    assert np.allclose(dbarW, (W_right - W_left) / st.k(0), rtol=0, atol=1e-6 * np.abs(dbarW).max())


def test_extended_time_derivative_estimator_keeps_its_order(sol):
    # the elliptic residual of dW sees round-off in stiff modes through h^-4 / k;
    # in plain double it stalls well before M = 12000
    from relaxnls.nls_stepper import EvaluatedSpline

    eta = []
    for M in (6000, 12000):
        sp = build_space(-30, 30, M, 2)
        st = init_state(sol, sp, TimeGrid.uniform(1, choose_timestep(M, 2)), extended=True)
        dW = advance(st, 0)[2]
        eta.append(EvaluatedSpline(st.disc, dW, with_values=False).eta2)
    assert np.log2(eta[0] / eta[1]) == pytest.approx(3.0, abs=0.05)
