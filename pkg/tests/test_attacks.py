import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dpal.attacks import (SectionParams, attribute_attack, attribute_design, count_histograms,
                          enumerate_histograms, epsilon_delta_witness,
                          exhaustive_attack_allcoords, exhaustive_attack_majority,
                          lp_decode_attack, lp_error_bound, nearest_neighbor_decode,
                          proof_chain, round_bits)
from dpal.data import AttributeTable, random_attribute_table, random_histogram
from dpal.exceptions import NotFoundError, ParameterError, ResourceError
from dpal.mechanisms import PrivacyParams, bounded_noise_adversary, noiseless
from dpal.queries import CountingQuery, MarginalQuery, marginal_query_evaluate, random_sign_query


def test_section_params():
    p = SectionParams(0.5, 2.0)
    assert p.gamma_wild == pytest.approx(0.5 ** 2 / 8)
    with pytest.raises(ParameterError):
        SectionParams(0.0, 1.0)
    with pytest.raises(ParameterError):
        SectionParams(1.5, 1.0)


def test_lp_identity_exact():
    x = np.array([3, 0, 2])
    res = lp_decode_attack(CountingQuery(np.eye(3)), noiseless(x.astype(float)),
                           SectionParams(1 / math.sqrt(3), 1.0), 0.0, truth=x)
    assert res.l1_error <= 1e-6 and res.success
    assert res.success == (res.l1_error <= res.bound_used)


@pytest.mark.property
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_lp_exact_recovery_without_noise(d, seed):
    rng = np.random.default_rng(seed)
    A = random_sign_query(d, 4 * d, rng)
    if np.linalg.matrix_rank(A.matrix) < d:
        return
    x = rng.integers(0, 6, size=d)
    res = lp_decode_attack(A, noiseless(A(x)), SectionParams(0.5, 1.0), 0.0, truth=x)
    assert res.l1_error <= 1e-6


@pytest.mark.property
@given(st.integers(1, 5), st.floats(0, 3), st.floats(0, 0.6), st.integers(0, 2 ** 31 - 1))
def test_proof_chain_optimality_step(d, alpha, gamma, seed):
    # ‖Az‖₁ − 2‖Az‖_{S,1} ≤ 2‖e‖_{S̄,1} holds for every optimal x̃, whatever the noise
    rng = np.random.default_rng(seed)
    A = random_sign_query(d, 4 * d, rng)
    x = rng.integers(0, 6, size=d)
    rel = bounded_noise_adversary(A(x), alpha, gamma, alpha + 50, rng)
    res = lp_decode_attack(A, rel, SectionParams(0.5, 1.0), alpha, truth=x)
    c = res.certificate["proof_chain"]
    assert c["lhs"] <= c["rhs_noise"] + 1e-7 * max(1.0, c["rhs_noise"])
    assert c["rhs_noise"] <= c["rhs_count"] + 1e-9
    assert res.l1_error >= 0 and res.success == (res.l1_error <= res.bound_used)


def test_lp_bound_and_rounding():
    p = SectionParams(0.5, 2.0)
    expected = 8 * 1.0 * (1 - 0.25 / 8) * math.sqrt(128 * 32) / (0.5 * 2.0)
    assert lp_error_bound(1.0, p, 128, 32) == pytest.approx(expected)
    assert round_bits([0.5, 0.50001, -1, 2]).tolist() == [0, 1, 0, 1]


def test_lp_all_wild_does_not_crash():
    rng = np.random.default_rng(0)
    A = random_sign_query(8, 32, rng)
    x = rng.integers(0, 3, size=8)
    rel = bounded_noise_adversary(A(x), 1.0, 0.99, 1e4, rng)
    res = lp_decode_attack(A, rel, SectionParams(0.7, 3.0), 1.0, truth=x, round_to="integers")
    assert res.warnings
    assert res.success in (True, False)


def test_lp_rejects_zero_sigma_and_bad_length():
    A = random_sign_query(3, 6, 0)
    with pytest.raises(ParameterError):
        lp_decode_attack(A, noiseless(np.zeros(6)), SectionParams(0.5, 0.0), 1.0)
    with pytest.raises(Exception):
        lp_decode_attack(A, noiseless(np.zeros(5)), SectionParams(0.5, 1.0), 1.0)


def test_enumeration_order_and_count():
    blocks = list(enumerate_histograms(3, 4))
    flat = np.vstack(blocks)
    assert len(flat) == count_histograms(3, 4) == math.comb(7, 3)
    sizes = flat.sum(axis=1)
    assert np.all(np.diff(sizes) <= 0)
    for b in blocks:
        assert [tuple(r) for r in b] == sorted(tuple(r) for r in b)
    assert len({tuple(r) for r in flat}) == len(flat)


def small_instance(seed, d=3, n=6, k=993):
    rng = np.random.default_rng(seed)
    A = random_sign_query(d, k, rng)
    x = random_histogram(d, n, rng).counts
    return A, x


def test_majority_noiseless_exact():
    A, x = small_instance(0)
    res = exhaustive_attack_majority(A, noiseless(A(x)), 3, 6, 6 / (10 * math.sqrt(3)), 0.25,
                                     truth=x)
    assert res.l1_error == 0 and res.hit_fraction == 1.0


def test_single_type_universe():
    A = CountingQuery(np.ones((5, 1)))
    x = np.array([4])
    res = exhaustive_attack_majority(A, noiseless(A(x) + 0.2), 1, 6, 0.3, 0.25, truth=x)
    assert res.reconstruction.tolist() == [4]


def test_far_database_never_matches():
    A, x = small_instance(1)
    other = np.array([0, 0, 6]) if x[2] < 3 else np.array([6, 0, 0])
    assert np.abs(other - x).sum() >= 6
    tol, eta = 6 / (10 * math.sqrt(3)), 0.25
    frac = np.mean(np.abs(A(x) - A(other)) <= tol)
    assert frac < 0.5 + eta / 4


def test_allcoords_examples():
    A, x = small_instance(2, k=23)
    res = exhaustive_attack_allcoords(A, noiseless(A(x)), 3, 6, 0.0, truth=x)
    assert res.l1_error == 0
    res = exhaustive_attack_allcoords(A, noiseless(A(x)), 3, 6, math.inf)
    assert res.certificate["degenerate"] and res.warnings
    assert res.reconstruction.tolist() == [0, 0, 6]


def test_exhaustive_errors():
    A, x = small_instance(3, d=3, n=6, k=40)
    with pytest.raises(ResourceError) as e:
        exhaustive_attack_majority(A, noiseless(A(x)), 3, 6, 0.1, 0.25, max_candidates=10)
    assert e.value.estimate == count_histograms(3, 6)
    with pytest.raises(NotFoundError):
        exhaustive_attack_allcoords(A, noiseless(A(x) + 100), 3, 6, 1.0)


@pytest.mark.property
@given(st.integers(1, 3), st.integers(0, 5), st.integers(0, 2 ** 31 - 1))
def test_self_consistent_release_always_answers(d, n, seed):
    rng = np.random.default_rng(seed)
    A = random_sign_query(d, 12, rng)
    x = random_histogram(d, n, rng).counts
    tol = 0.5
    rel = A(x) + rng.uniform(-tol, tol, size=12)
    exhaustive_attack_majority(A, rel, d, n, tol, 0.25)
    exhaustive_attack_allcoords(A, rel, d, n, tol)


def identifiable(table, q):
    known_y = marginal_query_evaluate(table, q)
    h = table.hidden_column_index
    hits = 0
    for bits in itertools.product([-1, 1], repeat=table.n):
        v = table.values.copy()
        v[:, h] = bits
        hits += np.array_equal(marginal_query_evaluate(v, q), known_y)
    return hits == 1


def test_attribute_attack_small_brute_force():
    q = MarginalQuery(3, 2)
    checked = 0
    for seed in range(30):
        t = random_attribute_table(4, 3, seed).with_hidden(2)
        if not identifiable(t, q):
            continue
        _, hidden = t.known()
        res = attribute_attack(t, marginal_query_evaluate(t, q), 2, truth=hidden)
        assert res.l1_error == 0, seed
        checked += 1
    assert checked >= 10


def test_attribute_attack_all_zero_column():
    v = random_attribute_table(6, 4, 1).values.copy()
    v[:, 1] = -1
    t = AttributeTable(v, 1)
    res = attribute_attack(t, marginal_query_evaluate(t, MarginalQuery(4, 2)), 2,
                           truth=np.zeros(6))
    assert res.reconstruction.tolist() == [0] * 6


def test_attribute_attack_bare_array_and_warning():
    t = random_attribute_table(10, 3, 0).with_hidden(0)
    known, hidden = t.known()
    y = marginal_query_evaluate(t, MarginalQuery(3, 2))
    res = attribute_attack(known, y, 2, hidden_index=0, truth=hidden)
    assert any("under-determined" in w for w in res.warnings)
    with pytest.raises(ParameterError):
        attribute_attack(known, y, 2)


@given(st.integers(1, 8), st.integers(2, 5), st.integers(2, 3), st.integers(0, 10_000))
def test_attribute_design_reproduces_marginals(n, d_prime, ell, seed):
    if ell > d_prime:
        return
    t = random_attribute_table(n, d_prime, seed)
    h = seed % d_prime
    t = t.with_hidden(h)
    known, bits = t.known()
    A, rows = attribute_design(known, ell, h)
    y = marginal_query_evaluate(t, MarginalQuery(d_prime, ell))
    np.testing.assert_array_equal(A @ bits, y[rows])
    assert len(rows) == 2 ** (ell - 1) * math.comb(d_prime - 1, ell - 1)


def test_nearest_neighbor_examples():
    images = np.arange(20.0).reshape(5, 4)
    assert nearest_neighbor_decode(images, images[3]) == 3
    assert nearest_neighbor_decode([[0.0], [2.0]], [1.0]) == 0
    with pytest.raises(ParameterError):
        nearest_neighbor_decode(np.zeros((0, 2)), [0, 0])


ints = st.integers(-50, 50).map(float)


@pytest.mark.property
@given(st.integers(1, 8), st.integers(1, 5), st.data())
def test_nearest_neighbor_linear_scan_and_offset(m, k, data):
    images = data.draw(arrays(np.float64, (m, k), elements=ints))
    y = data.draw(arrays(np.float64, k, elements=ints))
    c = data.draw(arrays(np.float64, k, elements=ints))
    best, best_d = 0, None
    for i, im in enumerate(images):
        dist = float(((im - y) ** 2).sum())
        if best_d is None or dist < best_d:
            best, best_d = i, dist
    assert nearest_neighbor_decode(images, y) == best
    assert nearest_neighbor_decode(images + c, y + c) == best


def test_witness_gaussian_gate_and_boundary():
    params = PrivacyParams(1.0, 0.01)
    w = epsilon_delta_witness(lambda y, rng: y + rng.normal(0, 240, y.shape), None, 24, params,
                              trials=5, seed=0)
    assert w.hypothesis_rate == 0 and not w.fires and w.rate == 0

    def half_wild(y, rng):
        return np.where(np.arange(y.size) % 2 == 0, y, y + 1e6)

    w = epsilon_delta_witness(half_wild, None, 24, params, trials=3, seed=0, gamma=0.0)
    assert all(r["within_fraction"] == 0.5 and r["hypothesis_ok"] for r in w.trials)
    w = epsilon_delta_witness(half_wild, None, 24, params, trials=3, seed=0, gamma=0.05)
    assert not any(r["hypothesis_ok"] for r in w.trials) and w.rate == 0


def test_witness_thread_count_does_not_change_records():
    params = PrivacyParams(1.0, 0.01)
    mech = lambda y, rng: y + rng.normal(0, 1.0, y.shape)
    a = epsilon_delta_witness(mech, None, 12, params, trials=6, seed=3)
    b = epsilon_delta_witness(mech, None, 12, params, trials=6, seed=3, n_jobs=3)
    assert a.to_json() == b.to_json()
    assert [r["trial"] for r in b.trials] == list(range(6))
