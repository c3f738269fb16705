import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtraj import kernels
from qtraj._program import AxisSpec, TermSpec
from qtraj.errors import StiffnessError
from qtraj.integrate import OdeStepper, adaptive_step
from qtraj.statevec import make_view

import helpers

BACKENDS = kernels.available_backends()
needs_compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


def reference_rhs(n, terms, tau, psi):
    """Term-by-term evaluation straight from the program records."""
    out = np.zeros(n, complex)
    for term in terms:
        for first in term.firsts:
            ranges = [range(a.dim) for a in term.axes]
            for s in itertools.product(*ranges):
                targets = [si + a.offset for si, a in zip(s, term.axes)]
                if any(not 0 <= t < a.dim for t, a in zip(targets, term.axes)):
                    continue
                w = term.coef
                for si, a in zip(s, term.axes):
                    w *= a.diag[si]
                    if a.expo is not None:
                        w *= np.exp(tau * a.expo[si])
                src = first + sum(si * a.stride for si, a in zip(s, term.axes))
                dst = first + sum(t * a.stride for t, a in zip(targets, term.axes))
                out[dst] += w * psi[src]
    return out


@st.composite
def programs(draw):
    dims = draw(st.lists(st.integers(2, 5), min_size=1, max_size=3))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(draw(st.integers(1, 4))):
        k = draw(st.integers(1, len(dims)))
        axes = sorted(rng.choice(len(dims), size=k, replace=False).tolist())
        view = make_view(dims, axes)
        specs = []
        for ax, stride in zip(axes, view.strides):
            d = dims[ax]
            kind = draw(st.sampled_from(["none", "linear", "general"]))
            if kind == "none":
                expo = None
            elif kind == "linear":
                a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
                expo = a + b * np.arange(d)
            else:
                expo = rng.normal(size=d) + 1j * rng.normal(size=d)
            diag = rng.normal(size=d) + 1j * rng.normal(size=d)
            specs.append(AxisSpec(stride, d, int(rng.integers(-d + 1, d)), diag, expo))
        coef = complex(rng.normal(), rng.normal())
        terms.append(TermSpec(coef, view.firsts, tuple(specs)))
    return math.prod(dims), terms, seed


@pytest.mark.parametrize("backend", BACKENDS)
@given(programs(), st.floats(-1.5, 1.5))
@settings(max_examples=60, deadline=None)
def test_rhs_matches_reference(backend, program, tau):
    n, terms, seed = program
    psi = np.random.default_rng(seed + 1).normal(size=n) + 0j
    prog = kernels.get_backend(backend).TermProgram(n, terms)
    expected = reference_rhs(n, terms, tau, psi)
    scale = max(1.0, float(np.max(np.abs(expected))))
    assert np.max(np.abs(prog.rhs(tau, psi) - expected)) < 1e-12 * scale


@pytest.mark.parametrize("backend", BACKENDS)
def test_accumulate_adds(backend):
    n = 6
    prog = kernels.get_backend(backend).TermProgram(n, [])
    out = np.ones(n, complex)
    prog.accumulate(0.3, np.ones(n, complex), out)
    assert np.all(out == 1)


@pytest.mark.parametrize("backend", BACKENDS)
def test_scale_slices(backend):
    psi = np.arange(24, dtype=complex)
    view = make_view((3, 4, 2), (1,))
    factors = np.array([1, 2, 3, 4], complex)
    kernels.get_backend(backend).scale_slices(psi, view.firsts, view.strides[0], factors)
    expected = (np.arange(24).reshape(3, 4, 2) * factors[None, :, None]).ravel()
    np.testing.assert_array_equal(psi, expected)


@needs_compiled
@pytest.mark.parametrize("name", sorted(helpers.MINIMAL))
def test_backends_agree_on_composites(name):
    build = helpers.MINIMAL[name]
    py, cy = build(backend="python"), build(backend="cython")
    rng = np.random.default_rng(3)
    psi = rng.normal(size=py.total_dim) + 1j * rng.normal(size=py.total_dim)
    for tau in (0.0, 0.41, 3.7):
        assert np.max(np.abs(py.rhs(tau, psi) - cy.rhs(tau, psi))) < 1e-12


@needs_compiled
def test_backends_agree_on_steps():
    build = helpers.MINIMAL["IdenticalParticles"]
    py, cy = build(backend="python"), build(backend="cython")
    rng = np.random.default_rng(4)
    psi = rng.normal(size=py.total_dim) + 1j * rng.normal(size=py.total_dim)
    psi /= np.linalg.norm(psi)
    a, b = OdeStepper(eps=1e-7, dttry=0.05), OdeStepper(eps=1e-7, dttry=0.05)
    ya, yb = psi, psi
    for _ in range(5):
        ya = py.ode_step(ya, 0.0, a)
        yb = cy.ode_step(yb, 0.0, b)
        # the controller amplifies rounding in the error estimate
        assert a.dtdid == pytest.approx(b.dtdid, rel=1e-8)
        assert np.max(np.abs(ya - yb)) < 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_matches_generic_stepper(backend):
    sys = helpers.MINIMAL["Orthogonal cos"](backend=backend)
    rng = np.random.default_rng(5)
    psi = rng.normal(size=sys.total_dim) + 1j * rng.normal(size=sys.total_dim)
    stepper = OdeStepper(eps=1e-6, dttry=0.2)
    y = sys.ode_step(psi, 0.1, stepper)
    y_ref, hdid, hnext, _, _ = adaptive_step(sys.rhs, psi, 0.1, 0.2, 1e-6, 0.2)
    assert stepper.dtdid == pytest.approx(hdid, rel=1e-12)
    assert stepper.dttry == pytest.approx(hnext, rel=1e-10)
    assert np.max(np.abs(y - y_ref)) < 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_underflow(backend):
    mod = kernels.get_backend(backend)
    d = make_view((2,), (0,))
    term = TermSpec(1.0, d.firsts, (AxisSpec(1, 2, 0, np.array([np.nan, np.nan], complex), None),))
    prog = mod.TermProgram(2, [term])
    with pytest.raises(StiffnessError):
        prog.ck_step(np.ones(2, complex), 0.0, 0.1, 1e-6, 0.1)


@needs_compiled
def test_compiled_step_restores_float_mode():
    # the compiled loops flush subnormals; the caller must still see them afterwards
    sys = helpers.MINIMAL["Orthogonal cos"](backend="cython")
    psi = np.full(sys.total_dim, 1e-310 + 0j)
    psi[0] = 1.0
    sys.ode_step(psi, 0.0, OdeStepper(eps=1e-6, dttry=0.01))
    prog = kernels.get_backend("cython").TermProgram(1, [])
    prog.accumulate(0.0, np.ones(1, complex), np.zeros(1, complex))
    tiny = np.float64(5e-324)
    assert tiny * 1.0 == tiny
    assert np.float64(1e-300) * 1e-15 > 0


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_env_override(monkeypatch):
    monkeypatch.setenv("QTRAJ_BACKEND", "python")
    assert kernels.get_backend().NAME == "python"
