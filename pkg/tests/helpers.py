"""Shared builders for small composites and the dense comparison used by several tests."""

import numpy as np

from qtraj import elements as el
from qtraj.oracle import assemble_dense
from qtraj.system import Composite


def _mode(cutoff=4, pumped=False, kappa=0.6, delta_c=-0.4):
    if pumped:
        return el.PumpedLossyMode(delta_c, kappa, 0.7 - 0.3j, cutoff)
    return el.LossyMode(delta_c, kappa, cutoff)


def _pumped(res=8, pump="cos:1", omega=0.3, eta_eff=0.8):
    return el.PumpedMovingParticle(omega, res, eta_eff, el.ModeFunction.parse(pump))


def _plain(res=8, omega=0.25):
    return el.MovingParticle(omega, res)


def lossy_mode(**kw):
    return Composite([_mode(8)], **kw)


def pumped_mode(**kw):
    return Composite([_mode(8, pumped=True)], **kw)


def moving_particle(**kw):
    return Composite([_plain(16)], **kw)


def pumped_particle_cos(**kw):
    return Composite([_pumped(16, "cos:1")], **kw)


def pumped_particle_sin2(**kw):
    return Composite([_pumped(16, "sin:2")], **kw)


def orthogonal(pump="cos:1", adjust=True):
    def build(**kw):
        m, p = _mode(4, pumped=True), _pumped(8, pump)
        return Composite([m, p], [(el.ParticleOrthogonalToCavity(m, p, -0.9, adjust), (0, 1))], **kw)

    return build


def along(cavity="cos:1", adjust=True, pumped=False):
    def build(**kw):
        m = _mode(4)
        if pumped:
            p = _pumped(8, "sin:1")
            inter = el.ParticleAlongCavity(m, p, 0.7, el.ModeFunction.parse(cavity),
                                           adjust_detuning=adjust)
        else:
            p = _plain(8)
            inter = el.ParticleAlongCavity(m, p, 0.7, el.ModeFunction.parse(cavity), eta_eff=0.5,
                                           adjust_detuning=adjust)
        return Composite([p, m], [(inter, (1, 0))], **kw)

    return build


def cavity2d(cavity="sin:1", pump="plus:1"):
    def build(**kw):
        m, p1, p2 = _mode(3), _plain(4, 0.4), _pumped(4, pump, 0.2, 0.6)
        inter = el.ParticleCavity2D(m, p1, p2, -0.8, el.ModeFunction.parse(cavity))
        return Composite([m, p1, p2], [(inter, (0, 1, 2))], **kw)

    return build


def two_modes_aliased(**kw):
    p = _plain(8)
    m1 = el.PumpedLossyMode(-1.0, 0.5, 0.4, 3)
    m2 = el.LossyMode(-1.0, 0.5, 3)
    pc1 = el.ParticleAlongCavity(m1, p, -0.6, el.ModeFunction.parse("plus:1"), eta_eff=0.3)
    pc2 = el.ParticleAlongCavity(m2, p, -0.6, el.ModeFunction.parse("minus:1"), eta_eff=0.3)
    tm = el.ParticleTwoModes(pc1, pc2)
    return Composite([m1, m2, p], [(pc1, (0, 2)), (pc2, (1, 2)), (tm, (0, 2, 1, 2))], **kw)


def two_modes_separate(**kw):
    p1, p2 = _plain(4, 0.3), _plain(4, 0.2)
    m1, m2 = el.LossyMode(0.3, 0.5, 3), el.PumpedLossyMode(-0.2, 0.4, 0.5j, 3)
    pc1 = el.ParticleAlongCavity(m1, p1, 0.5, el.ModeFunction.parse("cos:1"), eta_eff=0.4)
    pc2 = el.ParticleAlongCavity(m2, p2, 0.8, el.ModeFunction.parse("sin:1"), eta_eff=0.2)
    tm = el.ParticleTwoModes(pc1, pc2)
    return Composite([m1, p1, m2, p2], [(pc1, (0, 1)), (pc2, (2, 3)), (tm, (0, 1, 2, 3))], **kw)


def identical_particles(**kw):
    p = _pumped(8, "cos:1", 0.1, -0.5)
    m = _mode(3)
    states = [el_state(8, 1), el_state(8, -1)]
    return Composite(
        [p, p, m],
        [
            (el.ParticleOrthogonalToCavity(m, p, -0.5), (2, 0)),
            (el.ParticleOrthogonalToCavity(m, p, -0.5), (2, 1)),
            (el.IdenticalParticles(p, states=states), (0, 1)),
        ],
        **kw,
    )


def el_state(res, k):
    from qtraj.statevec import momentum_state

    return momentum_state(k, res)


MINIMAL = {
    "LossyMode": lossy_mode,
    "PumpedLossyMode": pumped_mode,
    "MovingParticle": moving_particle,
    "PumpedMovingParticle cos": pumped_particle_cos,
    "PumpedMovingParticle sin2": pumped_particle_sin2,
    "Orthogonal cos": orthogonal("cos:1"),
    "Orthogonal sin": orthogonal("sin:1"),
    "Orthogonal plus": orthogonal("plus:1"),
    "Orthogonal no adjust": orthogonal("cos:1", adjust=False),
    "Along cos": along("cos:1"),
    "Along sin": along("sin:1"),
    "Along plus": along("plus:1"),
    "Along minus no adjust": along("minus:2", adjust=False),
    "Along cos no adjust": along("cos:1", adjust=False),
    "Along pumped particle": along("cos:1", pumped=True),
    "Cavity2D": cavity2d(),
    "Cavity2D cos/sin": cavity2d("cos:1", "sin:1"),
    "TwoModes aliased": two_modes_aliased,
    "TwoModes separate": two_modes_separate,
    "IdenticalParticles": identical_particles,
}


def random_states(dim, n, rng):
    return rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))


def dense_errors(sys, n_states=50, seed=0, taus=(0.0, 0.37), dt=0.29):
    """Max-abs deviations of the engine from the dense model on random states.

    Returns a dict with keys ``H`` (``-i H_I(tau) psi`` for every tau),
    ``U`` (exact propagator) and ``J`` (every jump operator).
    """
    rng = np.random.default_rng(seed)
    model = assemble_dense(sys)
    states = random_states(sys.total_dim, n_states, rng)
    err = {"H": 0.0, "U": 0.0, "J": 0.0}
    mats = [(tau, model.picture_matrix(tau)) for tau in taus]
    if sys.interaction_picture:
        u = np.exp(dt * model.free_generator())
    else:
        u = np.ones(sys.total_dim)
    for psi in states:
        for tau, M in mats:
            out = np.zeros_like(psi)
            sys.apply_H(tau, psi, out)
            expected = M @ psi if sys.interaction_picture else -1j * model.h_nonhermitian() @ psi
            err["H"] = max(err["H"], float(np.max(np.abs(out - expected))))
        got = psi.copy()
        sys.apply_U(dt, got)
        err["U"] = max(err["U"], float(np.max(np.abs(got - u * psi))))
        for m, J in enumerate(model.jumps):
            err["J"] = max(err["J"], float(np.max(np.abs(sys.apply_jump(m, psi) - J @ psi))))
    if len(model.jumps) != len(sys.channels):
        err["J"] = float("inf")
    return err
