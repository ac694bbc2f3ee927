import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permspectra.errors import ParameterError
from permspectra.estimators import chi_square, chi_square_two_sample
from permspectra.exact_measures import coefficient_t
from permspectra.oracle import cycle_type_law, enumerate_ewens, exact_block_probability
from permspectra.sampling_core import RandomStream
from permspectra.virtual_permutation import (
    CrpTrace, CycleDecomposition, crp_successors, crp_to_permutation, cycle_statistics,
    ewens_probability, extend_virtual, feller_cycle_lengths, project, sample_circle_construction,
    sample_crp_batch, sample_crp_prefix, sample_feller,
)


def _all_traces(N):
    return itertools.product(*[range(1, j + 1) for j in range(1, N + 1)])


def _type_key(lengths):
    return tuple(sorted(int(l) for l in lengths))


# ------------------------------------------------------------------ traces

def test_trace_validation():
    with pytest.raises(ParameterError):
        CrpTrace((2,))
    with pytest.raises(ParameterError):
        CrpTrace((1, 3))


def test_single_choice():
    assert sample_crp_prefix(1.0, 1, RandomStream(0)).choices == (1,)


def test_prefix_extends_shorter_prefix():
    a = sample_crp_prefix(1.5, 50, RandomStream(3, 1)).choices
    b = sample_crp_prefix(1.5, 200, RandomStream(3, 1)).choices
    assert b[:50] == a


def test_uniform_choice_at_third_step():
    batch = sample_crp_batch(1.0, 3, 100_000, RandomStream(11))
    counts = np.bincount(batch[:, 2], minlength=4)[1:]
    assert chi_square(counts, np.full(3, counts.sum() / 3)).passed


def test_new_cycle_fraction_grows_with_theta():
    j = 10
    fr = [np.mean(sample_crp_batch(t, j, 20_000, RandomStream(5, i))[:, j - 1] == j)
          for i, t in enumerate([0.5, 2.0, 20.0, 500.0])]
    assert all(a < b for a, b in zip(fr, fr[1:]))
    assert fr[-1] > 0.95


def test_batch_and_sequential_choices_have_same_law():
    theta, N = 2.0, 6
    batch = sample_crp_batch(theta, N, 50_000, RandomStream(2))
    assert np.all(batch[:, 0] == 1)
    for j in range(2, N + 1):
        p = np.full(j, 1 / (theta + j - 1))
        p[-1] = theta / (theta + j - 1)
        counts = np.bincount(batch[:, j - 1], minlength=j + 1)[1:]
        assert chi_square(counts, p * counts.sum()).passed


# --------------------------------------------------------- insertion rule

def test_insertion_into_existing_cycle():
    # (124)(3) is produced by choices 1, 1, 3, 1
    base = crp_to_permutation(CrpTrace((1, 1, 3, 1)))
    assert str(base) == "(1 2 4)(3)"
    assert str(crp_to_permutation(CrpTrace((1, 1, 3, 1, 2)))) == "(1 5 2 4)(3)"


def test_insertion_as_fixed_point():
    assert str(crp_to_permutation(CrpTrace((1, 1, 3, 1, 5)))) == "(1 2 4)(3)(5)"


def test_all_new_cycles_give_identity():
    sigma = crp_to_permutation(CrpTrace(tuple(range(1, 8))))
    assert sigma.cycles == tuple((k,) for k in range(1, 8))


def test_vectorised_insertion_matches_sequential():
    choices = sample_crp_batch(0.7, 12, 300, RandomStream(9))
    succ = crp_successors(choices)
    for row, s in zip(choices, succ):
        ref = crp_to_permutation(CrpTrace(tuple(int(m) for m in row))).successor()
        assert np.array_equal(ref, s)


def test_text_round_trip():
    sigma = CycleDecomposition.from_text("(1 3 7 4 5)(2 8)(6)")
    assert str(sigma) == "(1 3 7 4 5)(2 8)(6)"
    assert str(CycleDecomposition.from_text("(3 1)(2)")) == "(1 3)(2)"
    with pytest.raises(ParameterError):
        CycleDecomposition.from_text("1 2")
    with pytest.raises(ParameterError):
        CycleDecomposition.from_text("(1 2)(2)")


# ------------------------------------------------------------- projection

def test_projection_example():
    sigma = CycleDecomposition.from_text("(1 3 7 4 5)(2 8)(6)")
    assert str(project(sigma, 7)) == "(1 3 7 4 5)(2)(6)"
    assert project(sigma, 8) == sigma
    with pytest.raises(ParameterError):
        project(sigma, 9)


def test_projection_commutes_with_truncation_exhaustively():
    n_checked = 0
    for choices in _all_traces(6):
        full = crp_to_permutation(CrpTrace(choices))
        for N2 in range(1, 7):
            assert project(full, N2) == crp_to_permutation(CrpTrace(choices[:N2]))
        n_checked += 1
    assert n_checked == 720


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 40))
def test_projections_compose(seed, N1):
    sigma = crp_to_permutation(sample_crp_prefix(1.0, N1, RandomStream(seed)))
    N2 = N1 // 2 + 1
    N3 = N2 // 2 + 1
    assert project(project(sigma, N2), N3) == project(sigma, N3)


# ---------------------------------------------------------- Ewens weights

def test_ewens_probability_examples():
    for perm, _, _ in enumerate_ewens(3, 1).rows:
        sigma = CycleDecomposition.from_successor(perm)
        assert ewens_probability(sigma, 1) == Fraction(1, 6)
    assert ewens_probability(CycleDecomposition.from_text("(1)(2)(3)"), 2) == Fraction(1, 3)
    assert ewens_probability(CycleDecomposition.from_text("(1 2 3)"), 2) == Fraction(1, 12)
    assert math.isclose(ewens_probability(CycleDecomposition.from_text("(1 2 3)"), 2.0), 1 / 12)


@pytest.mark.parametrize("theta", [Fraction(1, 2), 1, 3])
def test_ewens_probabilities_sum_to_one(theta):
    total = sum(ewens_probability(CycleDecomposition.from_successor(p), theta)
                for p in itertools.permutations(range(1, 6)))
    assert total == 1


def test_cycle_statistics_examples():
    st_id = cycle_statistics(CycleDecomposition.from_text("(1)(2)(3)(4)"))
    assert list(st_id["lengths"]) == [1, 1, 1, 1]
    assert st_id["counts"][1] == 4
    st_ex = cycle_statistics(CycleDecomposition.from_text("(1 3 7 4 5)(2 8)(6)"))
    assert list(st_ex["lengths"]) == [5, 2, 1]
    assert st_ex["n_cycles"] == 3


def test_cycle_counts_partition_N():
    choices = sample_crp_batch(1.3, 30, 10_000, RandomStream(4))
    succ = crp_successors(choices)
    for s in succ[:2000]:
        counts = cycle_statistics(CycleDecomposition.from_successor(s))["counts"]
        assert int(np.dot(np.arange(counts.size), counts)) == 30


def _perm_codes(succ):
    N = succ.shape[1]
    return (succ - 1) @ (N ** np.arange(N))


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_ewens_frequencies_on_four_elements(theta):
    n = 1_000_000
    succ = crp_successors(sample_crp_batch(theta, 4, n, RandomStream(21, int(theta * 10))))
    freq = np.bincount(_perm_codes(succ), minlength=4 ** 4)
    perms = list(itertools.permutations(range(1, 5)))
    seen = 0
    for perm in perms:
        code = int(np.dot(np.array(perm) - 1, 4 ** np.arange(4)))
        p = ewens_probability(CycleDecomposition.from_successor(perm), theta)
        z = abs(freq[code] - n * p) / math.sqrt(n * p * (1 - p))
        assert z < 4, (perm, z)
        seen += freq[code]
    assert seen == n


def test_law_depends_only_on_cycle_type():
    n = 400_000
    succ = crp_successors(sample_crp_batch(1.7, 4, n, RandomStream(22)))
    freq = np.bincount(_perm_codes(succ), minlength=4 ** 4)
    classes: dict = {}
    for perm in itertools.permutations(range(1, 5)):
        code = int(np.dot(np.array(perm) - 1, 4 ** np.arange(4)))
        key = _type_key(CycleDecomposition.from_successor(perm).lengths())
        classes.setdefault(key, []).append(freq[code])
    for key, counts in classes.items():
        if len(counts) > 1:
            counts = np.array(counts, dtype=float)
            rep = chi_square(counts, np.full(counts.size, counts.mean()), alpha=0.01 / 4)
            assert rep.passed, key


@pytest.mark.parametrize("lengths", [(4,), (1, 3), (3, 1), (2, 2), (1, 1, 2), (2, 1, 1), (1, 1, 1, 1)])
@pytest.mark.parametrize("theta", [Fraction(1, 2), Fraction(2)])
def test_block_probability_formula(lengths, theta):
    rising = math.prod(theta + j for j in range(1, 4))
    expected = theta ** (len(lengths) - 1) / rising * math.prod(math.factorial(l - 1) for l in lengths)
    assert exact_block_probability(4, theta, lengths) == expected


def test_block_probability_by_simulation():
    theta, n = 1.5, 200_000
    succ = crp_successors(sample_crp_batch(theta, 4, n, RandomStream(23)))
    # supports {1,2} and {3,4} means sigma = (1 2)(3 4)
    hits = int(((succ[:, 0] == 2) & (succ[:, 1] == 1) & (succ[:, 2] == 4)).sum())
    p = float(exact_block_probability(4, Fraction(3, 2), (2, 2)))
    assert abs(hits - n * p) / math.sqrt(n * p * (1 - p)) < 4


# --------------------------------------------------------------- Feller

def test_feller_invariants():
    for i in range(200):
        f = sample_feller(0.8, 37, RandomStream(31, i))
        d = f.b - f.c
        assert f.xi[0] == 1
        assert set(np.unique(d)) <= {0, 1} and d.sum() == 1
        assert int(np.dot(np.arange(f.b.size), f.b)) == 37
        assert f.b[f.last_spacing] == f.c[f.last_spacing] + 1


def test_feller_all_ones():
    f = sample_feller(1e12, 9, RandomStream(0))
    assert f.xi.all() and f.b[1] == 9


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_feller_cycle_type_matches_enumeration(theta):
    law = cycle_type_law(5, Fraction(theta))
    keys = sorted(law)
    lengths, sample = feller_cycle_lengths(theta, 5, 100_000, RandomStream(32, int(2 * theta)))
    starts = np.r_[0, np.nonzero(np.diff(sample))[0] + 1, sample.size]
    types: dict = {}
    for a, b in zip(starts[:-1], starts[1:]):
        k = _type_key(lengths[a:b])
        types[k] = types.get(k, 0) + 1
    obs = np.array([types.get(k, 0) for k in keys], dtype=float)
    exp = np.array([float(law[k]) for k in keys]) * obs.sum()
    assert obs.sum() == 100_000
    assert chi_square(obs, exp, alpha=0.01).passed


@pytest.mark.parametrize("theta", [0.5, 2.0])
def test_feller_marginal_means(theta):
    N, n = 20, 100_000
    lengths, _ = feller_cycle_lengths(theta, N, n, RandomStream(33, int(2 * theta)))
    per_k = np.bincount(lengths, minlength=N + 1)
    for k in (1, 2, 3, 5, 10, 20):
        mean = theta * coefficient_t(N, k, theta) / k
        # counts are close to Poisson, so the standard error uses the mean
        se = math.sqrt(mean / n)
        assert abs(per_k[k] / n - mean) < 3 * se + 1e-12, k


# --------------------------------------------------------- virtual growth

def test_extend_by_zero_is_identity():
    trace = sample_crp_prefix(1.0, 30, RandomStream(40))
    full, w = extend_virtual(trace, 30, 1.0, RandomStream(41))
    assert full == trace
    assert np.isclose(w.limit_estimate.sum(), 1.0)


def test_extend_keeps_prefix_and_weights_are_consistent():
    trace = sample_crp_prefix(1.0, 10, RandomStream(42))
    full, w = extend_virtual(trace, 4096, 1.0, RandomStream(43), checkpoints=[64, 512])
    assert full.choices[:10] == trace.choices
    assert w.checkpoints == (64, 512, 4096)
    for y in w.y:
        assert np.isclose(y.sum(), 1.0)
        assert np.all(y <= w.sup_ratio[: y.size] + 1e-15)
    assert np.all(w.sup_ratio <= 1.0)


def test_weights_converge_along_trajectories():
    cps = [2 ** e for e in range(10, 17)]
    first, last = [], []
    for i in range(20):
        _, w = extend_virtual(CrpTrace((1,)), cps[-1], 1.0, RandomStream(44, i), checkpoints=cps)
        d = [np.abs(w.y[t + 1][:3] - np.pad(w.y[t], (0, 3))[:3]).sum() for t in range(len(cps) - 1)]
        first.append(d[0])
        last.append(d[-1])
    assert np.mean(last) < np.mean(first)
    assert np.mean(last) < 0.02


def test_sum_of_suprema_is_finite_with_decaying_terms():
    n, N = 500, 1024
    s = np.zeros((n, 64))
    for i in range(n):
        _, w = extend_virtual(CrpTrace((1,)), N, 1.0, RandomStream(45, i))
        k = min(64, w.sup_ratio.size)
        s[i, :k] = w.sup_ratio[:k]
    means = s.mean(axis=0)
    assert s.sum(axis=1).mean() < 5
    assert means[:4].sum() > means[4:8].sum() > means[16:24].sum()


def test_extend_rejects_shrinking():
    trace = sample_crp_prefix(1.0, 5, RandomStream(0))
    with pytest.raises(ParameterError):
        extend_virtual(trace, 4, 1.0, RandomStream(1))


# ------------------------------------------------------ circle construction

def test_circle_construction_degenerate_cases():
    for i in range(20):
        sigma = sample_circle_construction(0, 7, RandomStream(50, i))
        assert len(sigma.cycles) == 1
    assert sample_circle_construction(1.0, 1, RandomStream(51)).cycles == ((1,),)


def test_circle_construction_matches_crp():
    n = 30_000
    circle = [_type_key(sample_circle_construction(1.0, 5, RandomStream(52, i)).lengths())
              for i in range(n)]
    succ = crp_successors(sample_crp_batch(1.0, 5, n, RandomStream(53)))
    crp = [_type_key(CycleDecomposition.from_successor(s).lengths()) for s in succ]
    keys = sorted(cycle_type_law(5, 1))
    a = np.array([circle.count(k) for k in keys])
    b = np.array([crp.count(k) for k in keys])
    assert len(keys) == 7
    assert chi_square_two_sample(a, b, alpha=0.01).passed
