import math

import numpy as np
import pytest
from scipy.linalg import expm

from qtraj import elements as el
from qtraj.errors import ConfigError, ConstructionError, DegenerateStateError
from qtraj.oracle import assemble_dense
from qtraj.statevec import coherent_state, direct_product, fock_state, wave_packet
from qtraj.system import Composite, Free, Interaction, SubsystemsInteraction, composite_new

COS = el.ModeFunction.parse("cos:1")


def rand(dim, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def accumulate(sys, psi, tau=0.0):
    out = np.zeros_like(psi)
    sys.apply_H(tau, psi, out)
    return out


class TestValidation:
    def test_wrong_order_is_rejected(self):
        particle = el.MovingParticle(0.1, 8)
        mode = el.LossyMode(0.0, 1.0, 4)
        pc = el.ParticleAlongCavity(mode, particle, 1.0, COS, eta_eff=0.5)
        with pytest.raises(ConstructionError, match="order"):
            Composite([particle, mode], [(pc, (0, 1))])
        Composite([particle, mode], [(pc, (1, 0))])

    def test_arity(self):
        particle = el.MovingParticle(0.1, 8)
        mode = el.LossyMode(0.0, 1.0, 4)
        pc = el.ParticleAlongCavity(mode, particle, 1.0, COS, eta_eff=0.5)
        with pytest.raises(ConstructionError, match="expects 2"):
            Composite([mode, particle], [(pc, (0,))])

    def test_index_out_of_range(self):
        particle = el.MovingParticle(0.1, 8)
        mode = el.LossyMode(0.0, 1.0, 4)
        pc = el.ParticleAlongCavity(mode, particle, 1.0, COS, eta_eff=0.5)
        with pytest.raises(ConstructionError, match="out of range"):
            Composite([mode, particle], [(pc, (0, 2))])

    def test_pumped_slot_rejects_plain_particle(self):
        mode = el.LossyMode(0.0, 1.0, 4)
        plain = el.MovingParticle(0.1, 8)
        pumped = el.PumpedMovingParticle(0.1, 8, 0.5, COS)
        inter = el.ParticleOrthogonalToCavity(mode, pumped, 1.0)
        with pytest.raises(ConstructionError):
            Composite([mode, plain], [(inter, (0, 1))])

    def test_other_instance_is_rejected(self):
        mode = el.LossyMode(0.0, 1.0, 4)
        p1, p2 = el.MovingParticle(0.1, 8), el.MovingParticle(0.1, 8)
        pc = el.ParticleAlongCavity(mode, p1, 1.0, COS, eta_eff=0.5)
        with pytest.raises(ConstructionError, match="not the"):
            Composite([mode, p2], [(pc, (0, 1))])

    def test_forbidden_aliasing(self):
        p = el.MovingParticle(0.1, 8)
        with pytest.raises(ConstructionError, match="may not share"):
            Composite([p, p], [(el.IdenticalParticles(p), (0, 0))])

    def test_mode_slots_may_not_alias(self):
        p = el.MovingParticle(0.1, 8)
        m = el.LossyMode(0.0, 1.0, 3)
        pc1 = el.ParticleAlongCavity(m, p, 1.0, COS, eta_eff=0.5)
        pc2 = el.ParticleAlongCavity(m, p, 1.0, COS, eta_eff=0.5)
        with pytest.raises(ConstructionError):
            el.ParticleTwoModes(pc1, pc2)

    def test_no_capability(self):
        class Inert(Free):
            kind = "mode"
            dim = 2

        with pytest.raises(ConstructionError, match="no capability"):
            Composite([Inert()])

        class Idle(Interaction):
            slot_kinds = ("mode",)

            def __init__(self, f):
                self.frees = (f,)

        m = el.LossyMode(0.0, 1.0, 3)
        with pytest.raises(ConstructionError, match="no capability"):
            Composite([m], [(Idle(m), (0,))])

    def test_empty(self):
        with pytest.raises(ConstructionError):
            Composite([])

    def test_composite_new_accepts_wiring_records(self):
        m = el.LossyMode(0.0, 1.0, 4)
        p = el.PumpedMovingParticle(0.1, 8, 0.5, COS)
        w = SubsystemsInteraction(el.ParticleOrthogonalToCavity(m, p, 1.0), (0, 1))
        sys = composite_new([m, p], [w])
        assert sys.dims == (4, 8)


class TestFreesAdjust:
    def test_along_cos_shifts_by_half(self):
        m = el.LossyMode(0.0, 1.0, 4)
        p = el.MovingParticle(0.1, 8)
        Composite([m, p], [(el.ParticleAlongCavity(m, p, 1.0, COS, eta_eff=0.5), (0, 1))])
        assert m.delta_c == pytest.approx(-0.5)

    def test_two_orthogonal_wirings_shift_twice(self):
        m = el.LossyMode(1.0, 1.0, 3)
        p = el.PumpedMovingParticle(0.1, 4, 0.5, COS)
        q = el.PumpedMovingParticle(0.1, 4, 0.5, COS)
        Composite(
            [m, p, q],
            [
                (el.ParticleOrthogonalToCavity(m, p, 0.3), (0, 1)),
                (el.ParticleOrthogonalToCavity(m, q, 0.3), (0, 2)),
            ],
        )
        assert m.delta_c == pytest.approx(1.0 - 2 * 0.3)

    def test_same_interaction_wired_twice_to_shared_particle(self):
        m = el.LossyMode(1.0, 1.0, 3)
        p = el.PumpedMovingParticle(0.1, 4, 0.5, COS)
        inter = el.ParticleOrthogonalToCavity(m, p, 0.3)
        Composite([m, p, p], [(inter, (0, 1)), (inter, (0, 2))])
        assert m.delta_c == pytest.approx(0.4)

    def test_rebuild_is_idempotent(self):
        def build():
            m = el.LossyMode(1.0, 1.0, 3)
            p = el.PumpedMovingParticle(0.1, 4, 0.5, COS)
            inter = el.ParticleOrthogonalToCavity(m, p, 0.3)
            return m, p, inter

        m, p, inter = build()
        Composite([m, p], [(inter, (0, 1))])
        first = m.delta_c
        Composite([m, p], [(inter, (0, 1))])
        assert m.delta_c == first
        m2, p2, inter2 = build()
        Composite([m2, p2], [(inter2, (0, 1))])
        assert m2.delta_c == first

    def test_element_construction_does_not_adjust(self):
        m = el.LossyMode(1.0, 1.0, 3)
        p = el.PumpedMovingParticle(0.1, 4, 0.5, COS)
        el.ParticleOrthogonalToCavity(m, p, 0.3)
        assert m.delta_c == 1.0


class TestApplyH:
    def test_product_of_free_systems(self):
        mode = el.PumpedLossyMode(0.3, 0.5, 0.8, 4)
        part = el.PumpedMovingParticle(0.2, 8, 0.6, COS)
        a, b = rand(4, 1), rand(8, 2)
        tau = 0.4
        ra = accumulate(Composite([el.PumpedLossyMode(0.3, 0.5, 0.8, 4)]), a, tau)
        rb = accumulate(Composite([el.PumpedMovingParticle(0.2, 8, 0.6, COS)]), b, tau)
        both = accumulate(Composite([mode, part]), np.kron(a, b), tau)
        np.testing.assert_allclose(both, np.kron(ra, b) + np.kron(a, rb), atol=1e-14)

    def test_no_hamiltonian_leaves_zero(self):
        sys = Composite([el.LossyMode(1.0, 1.0, 5), el.MovingParticle(0.3, 8)])
        assert np.all(accumulate(sys, rand(40)) == 0)

    def test_accumulates(self):
        sys = Composite([el.PumpedLossyMode(0.3, 0.5, 0.8, 4)])
        psi = rand(4)
        out = np.ones(4, complex)
        sys.apply_H(0.1, psi, out)
        np.testing.assert_allclose(out - 1, accumulate(sys, psi, 0.1), atol=1e-15)

    def test_wiring_order_irrelevant(self):
        def build(order):
            m = el.LossyMode(-0.5, 0.4, 3)
            p = el.PumpedMovingParticle(0.1, 8, 0.7, COS)
            q = el.MovingParticle(0.2, 4)
            w = [
                (el.ParticleOrthogonalToCavity(m, p, -0.6), (0, 1)),
                (el.ParticleAlongCavity(m, q, 0.4, el.ModeFunction.parse("sin:1"), eta_eff=0.3),
                 (0, 2)),
            ]
            return Composite([m, p, q], [w[i] for i in order])

        psi = rand(96, 3)
        a = accumulate(build((0, 1)), psi, 0.3)
        b = accumulate(build((1, 0)), psi, 0.3)
        assert np.max(np.abs(a - b)) < 1e-13

    def test_repeat_call_identical(self):
        sys = Composite([el.PumpedMovingParticle(0.2, 16, 0.6, COS)])
        psi = rand(16)
        assert np.array_equal(accumulate(sys, psi, 0.7), accumulate(sys, psi, 0.7))


class TestApplyU:
    def test_zero_dt(self):
        sys = Composite([el.LossyMode(1.0, 1.0, 4), el.MovingParticle(0.3, 8)])
        psi = rand(32)
        out = psi.copy()
        sys.apply_U(0.0, out)
        assert np.array_equal(out, psi)

    def test_factor_order(self):
        m, p = el.LossyMode(1.0, 0.7, 4), el.MovingParticle(0.3, 8)
        psi = rand(32)
        one = np.kron(m.propagator(0.3), np.ones(8)) * (np.kron(np.ones(4), p.propagator(0.3)) * psi)
        other = np.kron(np.ones(4), p.propagator(0.3)) * (np.kron(m.propagator(0.3), np.ones(8)) * psi)
        np.testing.assert_allclose(one, other, rtol=0, atol=1e-15)
        out = psi.copy()
        Composite([m, p]).apply_U(0.3, out)
        np.testing.assert_allclose(out, one, atol=1e-15)

    def test_matches_dense_exponential(self):
        sys = Composite([el.PumpedLossyMode(1.0, 0.7, 0.2, 4), el.PumpedMovingParticle(0.3, 16, 0.5, COS)])
        model = assemble_dense(sys)
        psi = rand(64)
        out = psi.copy()
        sys.apply_U(0.45, out)
        expected = expm(0.45 * np.diag(model.free_generator())) @ psi
        assert np.max(np.abs(out - expected)) < 1e-13

    def test_identity_without_picture(self):
        sys = Composite([el.LossyMode(1.0, 1.0, 4)], interaction_picture=False)
        psi = rand(4)
        out = psi.copy()
        sys.apply_U(1.0, out)
        assert np.array_equal(out, psi)


class TestJumps:
    def test_single_photon(self):
        sys = Composite([el.LossyMode(0.0, 1.0, 4)])
        psi = sys.do_jump(0, fock_state(1, 4))
        np.testing.assert_allclose(psi.amps, fock_state(0, 4).amps, atol=1e-15)

    def test_coherent_is_invariant(self):
        sys = Composite([el.LossyMode(0.0, 1.0, 40)])
        alpha = 1.5 * np.exp(0.3j)
        psi = coherent_state(alpha, 40)
        after = sys.do_jump(0, psi)
        # a|alpha> = alpha|alpha> up to the truncated top amplitude; the
        # normalized result carries the phase of alpha
        np.testing.assert_allclose(after.amps, psi.amps * alpha / abs(alpha), atol=1e-12)

    def test_vacuum_rates(self):
        sys = Composite([el.LossyMode(0.0, 1.0, 4), el.LossyMode(0.0, 2.0, 3)])
        assert np.all(sys.jump_rates(np.kron(fock_state(0, 4).amps, fock_state(0, 3).amps)) == 0)

    def test_jump_on_vacuum_fails(self):
        sys = Composite([el.LossyMode(0.0, 1.0, 4)])
        with pytest.raises(DegenerateStateError):
            sys.do_jump(0, fock_state(0, 4))

    def test_sum_rule(self):
        sys = Composite(
            [el.LossyMode(0.2, 0.7, 4), el.PumpedLossyMode(0.1, 1.3, 0.4, 5)], interaction_picture=True
        )
        model = assemble_dense(sys)
        psi = rand(20, 5)
        dt = 0.013
        dp = dt * sum(np.vdot(psi, J.conj().T @ J @ psi).real for J in model.jumps)
        assert abs(dt * sys.jump_rates(psi).sum() - dp) < 1e-12

    def test_jump_normalizes(self):
        sys = Composite([el.LossyMode(0.2, 0.7, 4), el.MovingParticle(0.3, 8)])
        out = sys.do_jump(0, rand(32, 9))
        assert abs(np.linalg.norm(out) - 1) < 1e-14


class TestDisplay:
    def test_row_layout(self):
        m = el.LossyMode(0.0, 1.0, 4)
        p = el.MovingParticle(0.1, 8)
        sys = Composite([p, m])
        psi = direct_product(wave_packet(0.5, 1, 0.3, 8), coherent_state(0.5, 4))
        row = sys.display(1.5, 0.01, psi)
        assert row.shape == (2 + 4 + 4,)
        assert row[0] == 1.5 and row[1] == 0.01
        assert sys.group_widths == [4, 4]
        assert [name for name, _ in sys.labels] == ["particle[0]", "mode[1]"]

    def test_suppressed_groups(self):
        p = el.MovingParticle(0.1, 8)
        sys = Composite([p, p], [(el.IdenticalParticles(p), (0, 1))])
        assert sys.group_widths == [1]
        assert sys.suppressed == {0, 1}
        assert sys.display(0, 0, rand(64)).shape == (3,)


class TestHighestFrequency:
    def test_no_timescale(self):
        with pytest.raises(ConfigError):
            Composite([el.MovingParticle(0.0, 8)]).highest_frequency()

    def test_max_over_elements(self):
        m = el.LossyMode(1.0, 5.0, 4)
        p = el.MovingParticle(0.5, 8)
        assert Composite([m]).highest_frequency() == 5.0
        assert Composite([p]).highest_frequency() == 8.0
        assert Composite([m, p]).highest_frequency() == 8.0
