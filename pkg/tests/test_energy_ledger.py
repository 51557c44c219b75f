import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nematic_fsi.director import DirectorGrid, DirectorOperator
from nematic_fsi.energy_ledger import (
    CSV_COLUMNS, EnergyLedger, check_inequality, compute_ledger, director_terms,
    gl_penalty_bound_check,
)
from nematic_fsi.errors import BoundViolation, EnergyViolation
from nematic_fsi.shell import ShellState, exact_mode_dissipation, integrate_shell


def decaying_ledger(rates, dt=0.1):
    led = EnergyLedger()
    E = 1.0
    for i, r in enumerate(rates):
        if i:
            E -= 0.5 * dt * (r + rates[i - 1])
        led.append(i * dt, {"E_fluid": E}, {"D_visc": r}, 1.0)
    return led


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
def test_cumulative_dissipation_monotone(rates):
    led = EnergyLedger()
    for i, r in enumerate(rates):
        led.append(0.1 * i, {"E_bend": 1.0}, {"D_visc": r, "D_shell": 0.5 * r}, 1.0)
    D = led.total_dissipation()
    assert D[0] == 0.0 and np.all(np.diff(D) >= 0)
    assert np.all(led.array()[:, 1:6] >= 0)


@given(st.lists(st.floats(0, 2), min_size=2, max_size=20))
def test_exact_balance_has_zero_slack(rates):
    led = decaying_ledger(rates)
    ok, slack = check_inequality(led)
    assert ok and np.max(np.abs(slack)) < 1e-12
    assert led.energy_defect() < 1e-12


def test_violation_raises():
    led = EnergyLedger()
    led.append(0.0, {"E_fluid": 1.0}, {}, 1.0)
    led.append(0.1, {"E_fluid": 1.01}, {}, 1.0)
    with pytest.raises(EnergyViolation) as info:
        check_inequality(led)
    assert info.value.step == 1
    ok, slack = check_inequality(led, raise_on_fail=False)
    assert not ok and np.isclose(slack[-1], -0.01)
    assert check_inequality(led, tol_rel=0.02)[0]


def test_roundtrip_dict():
    led = decaying_ledger([0.3, 0.2, 0.1])
    again = EnergyLedger.from_dict(led.to_dict())
    assert np.array_equal(again.array(), led.array())
    assert again.array().shape[1] == len(CSV_COLUMNS)


def test_shell_terms():
    e, r, _ = compute_ledger(np.array([1.0, 2.0]), np.array([1.0, 0.5]), np.array([0.0, 1.0]))
    assert np.isclose(e["E_bend"], 0.5 * (1 + 4))
    assert np.isclose(e["E_shell_kin"], 0.5)
    assert np.isclose(r["D_shell"], 4.0)


def test_director_terms_unit_field():
    g = DirectorGrid(16, 9)
    op = DirectorOperator(g, np.array([0.1, 0.05]))
    d = np.zeros((2,) + g.shape)
    d[0] = 1.0
    e, r, defect = director_terms(d, op, 0.1)
    assert abs(e["E_dirichlet"]) < 1e-14 and e["E_gl"] == 0.0 and defect == 0.0
    d *= 0.9
    e, _, defect = director_terms(d, op, 0.1)
    # int (0.81 - 1)^2 / (4 eps^2) over an area-2pi channel
    assert np.isclose(e["E_gl"], 2 * np.pi * 0.19 ** 2 / 0.04)
    assert np.isclose(defect, np.sqrt(2 * np.pi) * 0.19)


def test_gl_penalty_envelope():
    led = EnergyLedger()
    led.append(0.0, {"E_gl": 1.0}, {}, 1.0, gl_defect=0.1)
    ok, sup, bound = gl_penalty_bound_check(led, 0.1)
    assert ok and np.isclose(bound, 0.2 * 1.001)
    with pytest.raises(BoundViolation):
        gl_penalty_bound_check(led, 0.01)


def test_gl_potential_of_zero_director():
    g = DirectorGrid(32, 17)
    op = DirectorOperator(g, np.zeros(1))
    e, _, _ = director_terms(np.zeros((2,) + g.shape), op, 0.1)
    assert np.isclose(e["E_gl"], 50 * np.pi, rtol=1e-13)


def test_shell_slack_matches_oracle_dissipation():
    dt = 1e-3
    traj = integrate_shell(ShellState([1.0], [0.0]), dt, 1000)
    led = EnergyLedger()
    for i, s in enumerate(traj):
        e, r, _ = compute_ledger(s.k, s.eta, s.eta_t)
        led.append(i * dt, e, r, 0.0)
    assert np.isclose(led.total_energy()[0], 0.5)
    ok, slack = check_inequality(led)
    assert ok and np.max(np.abs(slack)) < 1e-6
    assert abs(led.total_dissipation()[-1] - exact_mode_dissipation(1, 1.0, 1.0, 0.0)) < 1e-6
