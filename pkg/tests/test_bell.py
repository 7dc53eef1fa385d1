import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    dense_expectation,
    dense_table,
    pauli_dot,
    random_unit,
    random_walker_observable,
    walker_dense,
)
from walkbell.bell import (
    CoinObservable,
    DiagonalBinning,
    ResponseSet,
    batch_probabilities,
    correlator,
    evaluate_witness,
    evolve_ensemble,
    marginal_coin,
    marginal_walker,
    pauli_response,
    sign_binning,
    threshold_binning,
)
from walkbell.preparations import BlochVector, signed_decomposition

TSIRELSON = 2 * math.sqrt(2)


def _random_r(rng, r_max):
    return random_unit(rng) * r_max * rng.random() ** (1 / 3)


@pytest.mark.parametrize("T", range(1, 11))
def test_correlator_matches_dense_oracle(T):
    rng = np.random.default_rng(1000 + T)
    for _ in range(3):
        r = _random_r(rng, 2.0)
        A = CoinObservable(tuple(random_unit(rng)))
        B = random_walker_observable(rng, T)
        branches = evolve_ensemble(signed_decomposition(BlochVector(*r)), T)
        ref = dense_expectation(T, r, walker_dense(B, T), A.matrix)
        assert abs(correlator(branches, B, A) - ref) <= 1e-12
        ref_a = dense_expectation(T, r, np.eye(2 * T + 1), A.matrix)
        assert abs(marginal_coin(branches, A) - ref_a) <= 1e-12
        ref_b = dense_expectation(T, r, walker_dense(B, T), np.eye(2))
        assert abs(marginal_walker(branches, B) - ref_b) <= 1e-12


@pytest.mark.parametrize("T", [1, 3, 6, 10])
def test_joint_table_matches_dense_projectors(T):
    rng = np.random.default_rng(T)
    r = _random_r(rng, 2.0)
    A = (random_unit(rng), random_unit(rng))
    B = (random_walker_observable(rng, T), random_walker_observable(rng, T))
    rep, table = evaluate_witness(BlochVector(*r), A, B, T)
    ref = dense_table(T, r, A, [walker_dense(b, T) for b in B])
    assert np.max(np.abs(table.p - ref)) <= 1e-12


def test_binnings():
    sb = sign_binning(3)
    assert [sb.label(x) for x in range(-3, 4)] == [-1, -1, -1, 1, 1, 1, 1]
    assert sign_binning(3, -1).label(0) == -1
    tb = threshold_binning(4, 2)
    assert [tb.label(x) for x in range(-4, 5)] == [1, 1, 1, -1, -1, -1, 1, 1, 1]
    assert np.all(threshold_binning(4, 0).labels == 1)
    assert np.all(threshold_binning(4, 5).labels == -1)
    assert tb.descriptor() == {"kind": "threshold", "x0": 2}
    with pytest.raises(ValueError):
        threshold_binning(4, 6)
    with pytest.raises(ValueError):
        sign_binning(3, 0)
    with pytest.raises(ValueError):
        DiagonalBinning(2, [1, 0, 1, 1, 1])


def test_coin_observable():
    A = CoinObservable((0.0, 0.0, 1.0))
    assert np.allclose(A.matrix, np.diag([1, -1]))
    assert CoinObservable.from_matrix(pauli_dot((0.6, 0, 0.8))).bloch_dir == pytest.approx((0.6, 0, 0.8))
    assert A.negated().bloch_dir == (-0.0, -0.0, -1.0)
    with pytest.raises(ValueError):
        CoinObservable((1.0, 1.0, 0.0))


def test_lattice_mismatch_rejected():
    branches = evolve_ensemble(signed_decomposition(BlochVector(0, 0, 1)), 4)
    with pytest.raises(ValueError):
        correlator(branches, sign_binning(5), CoinObservable((0, 0, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_response_route_matches_branch_route(T, seed):
    rng = np.random.default_rng(seed)
    r = _random_r(rng, 2.0)
    A = (random_unit(rng), random_unit(rng))
    B = (random_walker_observable(rng, T), random_walker_observable(rng, T))
    _, table = evaluate_witness(BlochVector(*r), A, B, T)
    p = batch_probabilities(r[None, :], A[0], A[1], ResponseSet.build(T, *B))[0]
    assert np.max(np.abs(p - table.p)) <= 1e-12


@pytest.mark.parametrize("seed", range(20))
def test_affinity_in_bloch_vector(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 15))
    A = CoinObservable(tuple(random_unit(rng)))
    B = random_walker_observable(rng, T)

    def E(r):
        return correlator(evolve_ensemble(signed_decomposition(BlochVector(*r)), T), B, A)

    r = _random_r(rng, 2.0)
    e0 = E((0, 0, 0))
    pred = e0 + sum(r[k] * (E(np.eye(3)[k]) - e0) for k in range(3))
    assert abs(E(r) - pred) <= 1e-10
    K = pauli_response(T, B)
    assert abs(np.concatenate([[1.0], r]) @ K[:, 1:] @ np.array(A.bloch_dir) - E(r)) <= 1e-12


@pytest.mark.parametrize("seed", range(25))
def test_quantum_regime_bounds(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(1, 25))
    r = _random_r(rng, 1.0)
    A = (random_unit(rng), random_unit(rng))
    B = (random_walker_observable(rng, T), random_walker_observable(rng, T))
    rep, table = evaluate_witness(BlochVector(*r), A, B, T)
    assert abs(rep.S) <= TSIRELSON + 1e-9
    assert rep.admissible and rep.no_signaling
    assert rep.ns_deviation <= 1e-11 and table.normalization_error() <= 1e-10
