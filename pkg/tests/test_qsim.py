import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnqc import qsim
from tnqc.errors import ShapeError

from conftest import assert_grad_close, central_diff

S2 = math.sqrt(2) / 2
BUILD = {"qmps": qsim.build_qmps, "qttn": qsim.build_qttn, "qmera": qsim.build_qmera}


def dense_circuit_state(circuit, angles, theta):
    """Reference: full 2^n x 2^n matrices built with Kronecker products."""
    n = circuit.n_qubits
    eye = np.eye(2)

    def on(wire, g):
        return reduce(np.kron, [g if w == wire else eye for w in range(n)])

    def cnot(c, t):
        p0, p1 = np.diag([1, 0]), np.diag([0, 1])
        x = np.array([[0, 1], [1, 0]])
        return reduce(np.kron, [p0 if w == c else eye for w in range(n)]) + reduce(
            np.kron, [p1 if w == c else (x if w == t else eye) for w in range(n)]
        )

    psi = reduce(np.kron, [np.array([math.cos(a / 2), math.sin(a / 2)]) for a in angles]).astype(complex)
    for blk in circuit.blocks:
        for wire, idx in ((blk.wire_a, blk.params_a), (blk.wire_b, blk.params_b)):
            args = [theta[i] for i in idx] + [0.0] * (3 - len(idx))
            psi = on(wire, qsim.u3(*args)) @ psi
        psi = cnot(blk.wire_a, blk.wire_b) @ psi
    return psi


class TestGates:
    def test_u3_values(self):
        np.testing.assert_allclose(qsim.u3(0, 0, 0), np.eye(2), atol=1e-15)
        np.testing.assert_allclose(qsim.u3(math.pi, 0, 0), [[0, -1], [1, 0]], atol=1e-15)
        np.testing.assert_allclose(qsim.u3(math.pi / 2, 0, 0), [[S2, -S2], [S2, S2]], atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(*(st.floats(-2 * math.pi, 2 * math.pi),) * 3)
    def test_u3_unitary(self, t, p, l):
        u = qsim.u3(t, p, l)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)

    @pytest.mark.parametrize("which", [0, 1, 2])
    def test_u3_derivative(self, which):
        args = [0.7, -0.4, 1.3]
        h = 1e-6
        plus, minus = list(args), list(args)
        plus[which] += h
        minus[which] -= h
        numeric = (qsim.u3(*plus) - qsim.u3(*minus)) / (2 * h)
        np.testing.assert_allclose(qsim.u3_derivative(*args, which), numeric, atol=1e-9)

    def test_cnot(self):
        out = qsim.apply_gate(qsim.Statevector.basis("10"), qsim.CNOT, (0, 1))
        np.testing.assert_array_equal(out.amplitudes, qsim.Statevector.basis("11").amplitudes)
        out = qsim.apply_gate(qsim.Statevector.basis("00"), qsim.CNOT, (0, 1))
        np.testing.assert_array_equal(out.amplitudes, qsim.Statevector.basis("00").amplitudes)

    def test_ry_on_zero(self):
        out = qsim.apply_gate(qsim.Statevector.zero(1), qsim.ry(math.pi / 2), (0,))
        np.testing.assert_allclose(out.amplitudes, [S2, S2], atol=1e-15)

    def test_wire_errors(self):
        with pytest.raises(ShapeError):
            qsim.apply_gate(qsim.Statevector.zero(2), qsim.ry(0.1), (2,))
        with pytest.raises(ShapeError):
            qsim.apply_gate(qsim.Statevector.zero(2), qsim.CNOT, (1, 1))

    def test_basis_ordering_qubit0_msb(self):
        out = qsim.apply_gate(qsim.Statevector.zero(3), qsim.ry(math.pi), (0,))
        assert abs(out.amplitudes[0b100]) == pytest.approx(1.0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_norm_preserved(self, seed):
        rng = np.random.default_rng(seed)
        amps = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        state = qsim.Statevector(3, amps / np.linalg.norm(amps))
        for _ in range(5):
            w = tuple(rng.choice(3, 2, replace=False))
            state = qsim.apply_gate(state, qsim.CNOT, w)
            state = qsim.apply_gate(state, qsim.u3(*rng.uniform(-3, 3, 3)), (int(w[0]),))
            assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0, abs=1e-12)


class TestEncoding:
    def test_zeros(self):
        np.testing.assert_array_equal(qsim.encode_ry([0, 0, 0]).amplitudes, qsim.Statevector.zero(3).amplitudes)

    def test_pi(self):
        np.testing.assert_allclose(qsim.encode_ry([math.pi]).amplitudes, [0, 1], atol=1e-15)

    def test_product(self):
        np.testing.assert_allclose(qsim.encode_ry([math.pi / 2, 0]).amplitudes, [S2, 0, S2, 0], atol=1e-15)

    def test_count_mismatch(self):
        with pytest.raises(ShapeError):
            qsim.expectation(qsim.build_qmps(3), np.zeros(4))


class TestBuilders:
    @pytest.mark.parametrize(
        "name,n,count",
        [("qmps", 4, 6), ("qttn", 4, 6), ("qmera", 4, 8), ("qmps", 16, 30), ("qttn", 16, 30),
         ("qmps", 2, 2), ("qttn", 2, 2), ("qmera", 2, 2), ("qmps", 6, 10), ("qttn", 6, 10), ("qmera", 6, 16)],
    )
    def test_counts(self, name, n, count):
        assert BUILD[name](n).n_params == count

    def test_qttn_blocks(self):
        assert [(b.wire_a, b.wire_b) for b in qsim.build_qttn(4).blocks] == [(0, 1), (2, 3), (1, 3)]

    def test_qmera_blocks(self):
        assert [(b.wire_a, b.wire_b) for b in qsim.build_qmera(4).blocks] == [(1, 2), (0, 1), (2, 3), (1, 3)]

    def test_qmera_periodic_sixteen(self):
        assert qsim.build_qmera(16, layout="periodic").n_params == 60

    def test_full_unitary_triples_count(self):
        assert qsim.build_qttn(4, full_unitary=True).n_params == 18

    def test_measured_wire(self):
        for name in BUILD:
            c = BUILD[name](6)
            assert c.measure == c.blocks[-1].wire_b

    def test_descriptor_round_trip(self):
        c = qsim.build_qmera(6, True, seed=3, layout="periodic")
        again = qsim.build_circuit(c.descriptor(), seed=3)
        assert again.descriptor() == c.descriptor()
        np.testing.assert_array_equal(again.theta, c.theta)
        assert c.descriptor()["basis_ordering"] == "qubit0-msb"


class TestMeasurement:
    def test_expval_basis(self):
        assert qsim.expval_z(qsim.Statevector.zero(1), 0) == 1.0
        assert qsim.expval_z(qsim.Statevector.basis("1"), 0) == -1.0

    def test_expval_ry(self):
        assert qsim.expval_z(qsim.encode_ry([math.pi / 2]), 0) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("e,p", [(1.0, 1.0), (0.0, 0.0), (-1.0, 1.0)])
    def test_born(self, e, p):
        assert qsim.born_probability_q(e) == p

    def test_shots_on_basis_state(self):
        assert qsim.sample_shots(qsim.Statevector.zero(2), 1, 17, seed=0) == 1.0

    def test_shots_deterministic(self):
        s = qsim.encode_ry([math.pi / 2])
        assert qsim.sample_shots(s, 0, 5000, seed=9) == qsim.sample_shots(s, 0, 5000, seed=9)

    def test_shots_error_scaling(self):
        s = qsim.encode_ry([1.1])
        exact = qsim.expval_z(s, 0)
        for n in (100, 1000, 10000):
            errs = np.array([abs(qsim.sample_shots(s, 0, n, seed=k) - exact) for k in range(300)])
            assert np.mean(errs < 3 / math.sqrt(n)) >= 0.99

    def test_batched_shots_match_single(self):
        c = qsim.build_qttn(4, seed=1)
        angles = np.random.default_rng(0).uniform(0, math.pi, (3, 4))
        est = qsim.sample_expectations(c, angles, 5000, seed=4)
        assert est.shape == (3,)
        np.testing.assert_allclose(est, qsim.expectation(c, angles), atol=0.1)


@pytest.mark.parametrize("name", list(BUILD))
@pytest.mark.parametrize("n", [2, 4, 6])
@pytest.mark.parametrize("full", [False, True])
def test_simulator_matches_dense_and_network(name, n, full):
    c = BUILD[name](n, full, seed=n)
    angles = np.random.default_rng(n).uniform(0, math.pi, n)
    sv = qsim.simulate(c, angles).amplitudes
    np.testing.assert_allclose(sv, dense_circuit_state(c, angles, c.theta), atol=1e-12)
    assert np.max(np.abs(sv - qsim.tn_amplitudes(c, angles))) < 1e-10


def test_batched_tn_amplitudes():
    c = qsim.build_qmera(4, seed=2)
    angles = np.random.default_rng(1).uniform(0, math.pi, (3, 4))
    np.testing.assert_allclose(qsim.tn_amplitudes(c, angles), qsim.simulate(c, angles), atol=1e-12)


class TestGradients:
    def test_single_qubit_shift(self):
        # one trainable rotation on the measured wire of a 2-qubit chain whose control stays |0>
        c = qsim.CircuitSpec(2, (qsim.Block(0, 1, (0,), (1,)),), 1, np.array([0.0, math.pi / 2]))
        g = qsim.param_shift_grad(c, [0.0, 0.0])
        assert g[1] == pytest.approx(-1.0, abs=1e-14)
        assert g[0] == pytest.approx(0.0, abs=1e-14)

    def test_stationary_point(self):
        c = qsim.build_qmps(2).with_theta(np.zeros(2))
        np.testing.assert_allclose(qsim.param_shift_grad(c, [0.0, 0.0]), 0.0, atol=1e-15)

    @pytest.mark.parametrize("name", list(BUILD))
    @pytest.mark.parametrize("n", [4, 6])
    def test_shift_rule_vs_finite_differences(self, name, n):
        c = BUILD[name](n, seed=5)
        x = np.random.default_rng(n).uniform(0, math.pi, n)
        g = qsim.param_shift_grad(c, x)
        numeric = central_diff(lambda t: qsim.expectation(c, x, t), c.theta)
        assert_grad_close(g, numeric, 1e-6)
        np.testing.assert_allclose(g, numeric, atol=1e-7)

    def test_encoding_grad(self):
        c = qsim.build_qttn(4, seed=2)
        x = np.random.default_rng(2).uniform(0, math.pi, 4)
        numeric = central_diff(lambda a: qsim.expectation(c, a), x)
        np.testing.assert_allclose(qsim.encoding_grad(c, x), numeric, atol=1e-8)

    def test_full_unitary_shift_rule(self):
        c = qsim.build_qmps(3, full_unitary=True, seed=1)
        x = np.array([0.3, 1.2, 2.0])
        numeric = central_diff(lambda t: qsim.expectation(c, x, t), c.theta)
        np.testing.assert_allclose(qsim.param_shift_grad(c, x), numeric, atol=1e-8)

    def test_batched_grad(self):
        c = qsim.build_qmera(4, seed=2)
        x = np.random.default_rng(0).uniform(0, math.pi, (3, 4))
        g = qsim.param_shift_grad(c, x)
        for b in range(3):
            np.testing.assert_allclose(g[b], qsim.param_shift_grad(c, x[b]), atol=1e-14)


class TestMetric:
    def test_single_rotation(self):
        # the target wire carries R_y(theta)|0> before an idle CNOT
        c = qsim.CircuitSpec(2, (qsim.Block(0, 1, (0,), (1,)),), 1, np.array([0.0, 0.3]))
        g = qsim.metric_tensor(c, [0.0, 0.0])
        assert g[1, 1] == pytest.approx(0.25, abs=1e-14)

    def test_independent_rotations(self):
        c = qsim.CircuitSpec(2, (qsim.Block(0, 1, (0,), (1,)),), 1, np.array([0.4, -1.1]))
        np.testing.assert_allclose(qsim.metric_tensor(c, [0.0, 0.0]), np.diag([0.25, 0.25]), atol=1e-14)

    @pytest.mark.parametrize("name", list(BUILD))
    def test_psd_and_symmetric(self, name):
        c = BUILD[name](6, seed=8)
        x = np.random.default_rng(1).uniform(0, math.pi, (4, 6))
        g = qsim.metric_tensor(c, x)
        np.testing.assert_array_equal(g, g.T)
        assert np.linalg.eigvalsh(g).min() >= -1e-10

    def test_matches_finite_difference_states(self):
        c = qsim.build_qttn(4, seed=3)
        x = np.array([0.2, 0.9, 1.7, 2.4])
        psi = lambda t: qsim.simulate(c, x, t).amplitudes
        h = 1e-6
        d = []
        for i in range(c.n_params):
            tp, tm = c.theta.copy(), c.theta.copy()
            tp[i] += h
            tm[i] -= h
            d.append((psi(tp) - psi(tm)) / (2 * h))
        d = np.array(d)
        p = psi(c.theta)
        ov = d.conj() @ d.T
        pr = d.conj() @ p
        ref = (ov - np.outer(pr, pr.conj())).real
        np.testing.assert_allclose(qsim.metric_tensor(c, x), ref, atol=1e-8)

    def test_batch_mean(self):
        c = qsim.build_qmps(4, seed=3)
        x = np.random.default_rng(2).uniform(0, math.pi, (3, 4))
        per = qsim.metric_tensor(c, x, per_event=True)
        np.testing.assert_allclose(qsim.metric_tensor(c, x), per.mean(axis=0), atol=1e-15)
