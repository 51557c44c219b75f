import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nematic_fsi.basis import BasisSet
from nematic_fsi.director import DirectorGrid, DirectorOperator, ericksen_stress
from nematic_fsi.errors import AssemblyError
from nematic_fsi.fluid_assembly import (
    Assembler, QuadratureGrid, factor_mass, quadrature_moving_domain,
)
from nematic_fsi.geometry import FourierProfile

# exact flat-channel integrals (sympy): interior (k=0, m=1) and boundary (k=1, cos) modes
GRAM_INTERIOR_0 = 9 * np.pi ** 2 / 16
GRAM_BOUNDARY_0 = 11 / 7
DIRICHLET_BOUNDARY_0 = 517 / 35

ZETA = np.array([0.1, -0.05, 0.03, 0.02, 0.0, 0.01])
ZETA_T = np.array([0.2, 0.1, -0.1, 0.05, 0.02, 0.0])


@pytest.fixture(scope="module")
def asm():
    return Assembler(BasisSet(6), QuadratureGrid(64, 33), DirectorGrid(64, 33))


def test_flat_integrals(asm):
    m = asm.assemble(np.zeros(6), np.zeros(6))
    assert abs(m.gram[0, 0] - GRAM_INTERIOR_0) < 1e-12
    assert abs(m.gram[1, 1] - GRAM_BOUNDARY_0) < 1e-12
    assert abs(m.dirichlet[1, 1] - DIRICHLET_BOUNDARY_0) < 1e-11
    assert np.allclose(m.a - m.gram, np.diag(np.isin(np.arange(12), m.boundary).astype(float)))


def test_mass_spd_and_area(asm):
    m = asm.assemble(ZETA, ZETA_T)
    assert np.allclose(m.a, m.a.T)
    assert np.linalg.eigvalsh(m.a)[0] > 0
    assert abs(m.area - 2 * np.pi) < 1e-12
    factor_mass(m.a, check=True)
    with pytest.raises(AssemblyError):
        factor_mass(-np.eye(3))


def test_energy_identity_of_coefficients(asm):
    # 1/2 d/dt gram = -sym(b) - dirichlet - k^2 on the boundary diagonal
    m = asm.assemble(ZETA, ZETA_T)
    tau = 1e-5
    dG = (asm.assemble(ZETA + tau * ZETA_T, ZETA_T).gram - asm.assemble(ZETA - tau * ZETA_T, ZETA_T).gram) / (2 * tau)
    rhs = -(m.b + m.b.T) / 2 - m.dirichlet
    B = m.boundary
    rhs[B, B] -= asm.k ** 2
    assert np.max(np.abs(0.5 * dG - rhs)) < 1e-8


@given(st.integers(0, 2**31))
def test_transport_antisymmetric(seed):
    asm = Assembler(BasisSet(4), QuadratureGrid(32, 17))
    r = np.random.default_rng(seed)
    m = asm.assemble(0.05 * r.normal(size=4), r.normal(size=4), r.normal(size=8))
    assert np.max(np.abs(m.transport + m.transport.T)) < 1e-12


def test_moving_domain_quadrature():
    q = QuadratureGrid(64, 17)
    assert np.isclose(quadrature_moving_domain(lambda X, Z: Z, ZETA, q), np.pi + 0.5 * ZETA @ ZETA, atol=1e-13)
    assert np.isclose(quadrature_moving_domain(lambda X, Z: 1 + 0 * Z, ZETA, q), 2 * np.pi, atol=1e-13)


def _ericksen_error(n):
    # e_j = int S : grad psi_j on the flat channel against an independent Gauss rule
    asm = Assembler(BasisSet(6), QuadratureGrid(64, 33), DirectorGrid(64 * n, 32 * n + 1))
    g = asm.dgrid
    X, S = np.meshgrid(g.x, g.s, indexing="ij")
    th = 0.3 * np.cos(X) * np.cos(np.pi * S) + 0.2 * np.sin(2 * X)
    d = np.stack([np.cos(th), np.sin(th)])
    op = DirectorOperator(g, np.zeros(6))
    e = asm.ericksen_vector(ericksen_stress(d, op), op.snap)

    q = QuadratureGrid(128, 40)
    Xq, Sq = np.meshgrid(q.x, q.s, indexing="ij")
    tx = -0.3 * np.sin(Xq) * np.cos(np.pi * Sq) + 0.4 * np.cos(2 * Xq)
    ts = -0.3 * np.pi * np.cos(Xq) * np.sin(np.pi * Sq)
    T = np.array([[tx * tx, tx * ts], [ts * tx, ts * ts]])
    ref = asm.basis.reference_fields(q.x, q.s)
    exact = np.einsum("ijxs,mjixs,xs->m", T, ref.dv, q.weights)
    return np.max(np.abs(e - exact)) / np.max(np.abs(exact))


def test_ericksen_vector_converges_second_order():
    e1, e2 = _ericksen_error(1), _ericksen_error(2)
    assert e1 < 2e-2 and np.log2(e1 / e2) > 1.9


def test_memory_folding_matches_raw_path(asm):
    m = asm.assemble(np.zeros(6), np.zeros(6), eta0=np.array([0.1, 0, 0.2, 0, 0, 0.05]))
    assert np.allclose(m.c_diag, -asm.k ** 4)
    times = np.linspace(0, 0.3, 7)
    rate = np.array([0.2, -0.1, 0.0, 0.3, 0.1, 0.0])
    hist = np.zeros((7, 12))
    hist[:, m.boundary] = rate
    eta = np.array([0.1, 0, 0.2, 0, 0, 0.05]) + 0.3 * rate
    assert np.allclose(m.memory_raw(times, hist), m.bending(eta), atol=1e-14)


def test_flat_b_symmetric_negative():
    asm = Assembler(BasisSet(6), QuadratureGrid(64, 33))
    m = asm.assemble(np.zeros(6), np.zeros(6))
    assert np.allclose(m.transport, 0.0)
    assert np.allclose(m.b, m.b.T, atol=1e-12)
    assert np.linalg.eigvalsh(m.b)[-1] < 1e-12


def test_area_and_closed_form_quadrature():
    q = QuadratureGrid(64, 17)
    z = np.zeros(4)
    z[0] = 0.1 * np.sqrt(np.pi)  # 0.1 cos x
    assert abs(quadrature_moving_domain(lambda X, Z: 1.0 + 0 * Z, z, q) - 2 * np.pi) < 1e-12
    val = quadrature_moving_domain(lambda X, Z: np.sin(X) ** 2 * Z, np.zeros(4), q)
    assert abs(val - np.pi / 2) < 1e-12


@given(st.integers(0, 2**31))
def test_mass_spd_random_shells(seed):
    asm = Assembler(BasisSet(4), QuadratureGrid(32, 17))
    r = np.random.default_rng(seed)
    c = r.normal(size=4)
    z = c * r.uniform(0.01, 0.45) / FourierProfile(c).sup_norm()
    m = asm.assemble(z, r.normal(size=4))
    assert np.linalg.eigvalsh(m.a)[0] > 0
