import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nematic_fsi.geometry import TWO_PI, HanzawaMap, constant_profile, mode_table
from nematic_fsi.shell import (
    ShellState, exact_mode_dissipation, exact_mode_oracle, integrate_shell, shell_energies,
    shell_operator_apply, surface_force,
)

# reference values from an independent adaptive DOP853 solve (rtol 1e-13)
K1_T1 = (0.6597001533916904, -0.5335071951146843)
K2_T05 = (0.024208328060449234, -0.44939450269550074)


def test_oracle_matches_independent_solve():
    a, da = exact_mode_oracle(1, 1.0, 1.0, 0.0)
    assert abs(a - K1_T1[0]) < 1e-12 and abs(da - K1_T1[1]) < 1e-12
    a, da = exact_mode_oracle(2, 0.5, 0.3, -0.2)
    assert abs(a - K2_T05[0]) < 1e-12 and abs(da - K2_T05[1]) < 1e-12


def test_oracle_closed_form_k1():
    t = np.linspace(0, 1, 11)
    w = np.sqrt(3) / 2
    closed = np.exp(-t / 2) * (np.cos(w * t) + np.sin(w * t) / np.sqrt(3))
    assert np.allclose(exact_mode_oracle(1, t, 1.0, 0.0)[0], closed, atol=1e-15)
    with pytest.raises(ValueError):
        exact_mode_oracle(0, t, 1.0, 0.0)


def test_rk4_fourth_order():
    errs = []
    for dt in (0.02, 0.01):
        st_ = ShellState([1.0, 0.0, 0.5], [0.0, 0.2, 0.0])
        out = integrate_shell(st_, dt, int(round(0.5 / dt)))[-1]
        errs.append(abs(out.eta[0] - exact_mode_oracle(1, 0.5, 1.0, 0.0)[0]))
    assert 14 < errs[0] / errs[1] < 18


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6), st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_energy_balance_rk4(eta, vel):
    s0 = ShellState(np.array(eta), np.array(vel[: len(eta)]))
    dt, n = 1e-3, 200
    traj = integrate_shell(s0, dt, n)
    kin, bend, _ = np.array([shell_energies(s) for s in traj]).T
    rate = np.array([shell_energies(s)[2] for s in traj])
    E = kin + bend
    D = np.concatenate([[0], np.cumsum(0.5 * dt * (rate[1:] + rate[:-1]))])
    assert np.all(np.diff(E) <= 1e-12)
    assert np.max(np.abs(E + D - E[0])) <= 1e-5 * max(E[0], 1e-12) + 1e-14


def test_operator_and_dissipation_quadrature():
    s = ShellState([1.0, 0.0, 0.2], [0.0, 1.0, 0.0])
    assert np.allclose(shell_operator_apply(s), [-1.0, -1.0, -3.2])
    kin0, bend0, _ = shell_energies(ShellState([0.3], [0.1]))
    a, da = exact_mode_oracle(1, 0.7, 0.3, 0.1)
    kin1, bend1, _ = shell_energies(ShellState([a], [da]))
    assert np.isclose(kin0 + bend0 - kin1 - bend1, exact_mode_dissipation(1, 0.7, 0.3, 0.1), rtol=1e-12)


def test_surface_force_projects_pressure_like_stress():
    # T = -p I with p = cos(x): f = p |phi'| on a flat wall, projection sqrt(pi) on mode 0
    hmap = HanzawaMap(constant_profile(0.0))
    y = np.linspace(0, TWO_PI, 128, endpoint=False)
    stress = -np.cos(y)[:, None, None] * np.eye(2)
    f = surface_force(stress, hmap, y, 4)
    assert np.allclose(f, [np.sqrt(np.pi), 0, 0, 0], atol=1e-13)
    assert mode_table(4, y).shape == (4, 128)
