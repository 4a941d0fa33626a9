import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corners.errors import DomainError, ResourceError, ValidationError
from corners.groups import FiniteAbelianGroup, PlaneSet, census, random_plane_set
from corners.kernel import expectation
from corners.regularity import (
    Boxing,
    Caps,
    Subspace,
    box_corner_count,
    box_density,
    box_kernel,
    corners_within_W,
    counting_check,
    density_witness,
    energies,
    find_regular_boxing,
    inverse_walsh,
    quasirandom_audit,
    refine_A,
    refine_B,
    uniformity_audit,
    walsh,
    walsh_coefficients,
)
from corners.regularity.refine import _restrict

from oracles import energies_by_direct_sums, max_density_deviation, walsh_by_character_sums


def rand_set(n, density, seed):
    return random_plane_set(FiniteAbelianGroup.vector(2, n), density, np.random.default_rng(seed))


def random_subspace(n, dim, rng):
    while True:
        vecs = rng.integers(1, 1 << n, dim).tolist()
        w = Subspace(n, vecs)
        if w.dim == dim:
            return w


def random_boxing(n, codim, m, rng):
    w = random_subspace(n, n - codim, rng)
    k = w.num_cosets
    return Boxing(w, m, rng.integers(0, m, (k, k, 3, w.size)))


# ------------------------------------------------------------------ subspace

def test_subspace_reps_are_minimal_and_coordinates_linear():
    rng = np.random.default_rng(0)
    w = random_subspace(7, 3, rng)
    members = set(int(e) for e in w.span)
    assert len(members) == 8
    for x in range(128):
        coset = [x ^ e for e in members]
        assert w.rep[x] == min(coset)
    x, y = 37, 91
    assert w.local[x ^ y] == w.local[x] ^ w.local[y]
    assert np.array_equal(w.elements[w.coset_id, w.local], np.arange(128))


def test_kernel_of_one_character_has_codim_one_more():
    rng = np.random.default_rng(1)
    w = random_subspace(8, 5, rng)
    sub = w.kernel([0b10110])
    assert sub.codim == w.codim + 1
    assert sub.is_subspace_of(w)
    for e in sub.span:
        assert bin(0b10110 & int(w.local[e])).count("1") % 2 == 0


def test_dependent_basis_rejected_on_load():
    with pytest.raises(ValidationError):
        Boxing.from_dict({"n": 2, "basis": [1, 1], "m": 1, "boxes": []})


# --------------------------------------------------------------------- walsh

def test_walsh_full_coset_and_singleton():
    w = random_subspace(6, 4, np.random.default_rng(2))
    x = 0b100000 if not w.contains(0b100000) else 0b010000
    coset = [int(x ^ e) for e in w.span]
    full = walsh(w, coset, x)
    assert full[0] == 1 and np.all(full[1:] == 0)
    single = walsh(w, [x], x)
    assert np.all(single == 1 / w.size)


def test_walsh_rejects_points_outside_the_coset():
    w = Subspace(4, [1, 2])
    with pytest.raises(DomainError):
        walsh(w, [4], 0)


def test_walsh_half_space_has_coefficient_one_half():
    w = Subspace.full(5)
    half = [e for e in range(32) if not e & 0b00100]
    c = walsh(w, half, 0)
    big = np.flatnonzero(np.abs(c[1:]) > 1e-12) + 1
    assert big.tolist() == [0b00100] and c[0b00100] == 0.5


def test_walsh_matches_character_sums_on_random_cell():
    rng = np.random.default_rng(3)
    ind = np.zeros(1024, dtype=int)
    ind[rng.permutation(1024)[:512]] = 1
    fast = walsh_coefficients(ind)
    assert np.allclose(fast, walsh_by_character_sums(ind, 10), atol=1e-15)
    # typical size of the largest nontrivial coefficient for a random balanced set
    assert np.abs(fast[1:]).max() < 4 * math.sqrt(10 / 1024)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 12), st.integers(0, 2**31 - 1))
def test_walsh_parseval_and_round_trip(dim, seed):
    rng = np.random.default_rng(seed)
    ind = (rng.random(1 << dim) < rng.random()).astype(np.int64)
    coef = walsh_coefficients(ind)
    assert abs((coef**2).sum() - ind.mean()) <= 1e-12
    assert np.array_equal(inverse_walsh(coef), ind)


# ------------------------------------------------------------------ energies

def test_trivial_boxing_energies():
    A = rand_set(5, 0.4, 4)
    e = energies(Boxing.trivial(5), A)
    assert e.e1 == 1.0
    assert e.e2 == pytest.approx(A.density**2, abs=1e-15)


@pytest.mark.parametrize("seed", range(4))
def test_energies_match_direct_sums(seed):
    rng = np.random.default_rng(seed)
    n = 4
    b = random_boxing(n, int(rng.integers(0, 3)), int(rng.integers(1, 4)), rng)
    A = rand_set(n, 0.5, seed)
    e = energies(b, A)
    e1, e2 = energies_by_direct_sums(b.to_dict(), A.indicator)
    assert e.e1 == pytest.approx(e1, abs=1e-12)
    assert e.e2 == pytest.approx(e2, abs=1e-12)


def test_even_split_leaves_e2_unchanged():
    # membership depends on y only, so every x-cell sees the same density
    n = 4
    rng = np.random.default_rng(5)
    col = rng.random(16) < 0.5
    A = PlaneSet(FiniteAbelianGroup.vector(2, n), np.tile(col, (16, 1)))
    triv = Boxing.trivial(n)
    labels = np.array(triv.labels)
    labels[0, 0, 0, rng.permutation(16)[:8]] = 1
    split = Boxing(triv.subspace, 2, labels)
    assert energies(split, A).e2 == pytest.approx(energies(triv, A).e2, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_any_refinement_never_lowers_e2(seed):
    rng = np.random.default_rng(seed)
    n = 5
    A = rand_set(n, rng.random(), seed)
    b = random_boxing(n, int(rng.integers(0, 3)), int(rng.integers(1, 4)), rng)
    before = energies(b, A)
    # split every cell by a random bit
    bit = rng.integers(0, 2, b.labels.shape)
    finer = Boxing(b.subspace, 2 * b.m, 2 * np.asarray(b.labels, dtype=np.int64) + bit)
    assert energies(finer, A).e2 >= before.e2 - 1e-12
    # restricting to a random smaller subspace refines too
    if b.subspace.dim:
        sub = b.subspace.kernel([int(rng.integers(1, b.subspace.size))])
        restricted = _restrict(b, sub)
        after = energies(restricted, A)
        assert after.e1 >= before.e1 - 1e-12 and after.e2 >= before.e2 - 1e-12
    for e in (before, energies(finer, A)):
        assert 0 <= e.e1 <= 1 and 0 <= e.e2 <= 1


# ------------------------------------------------------------- uniformity

def test_full_coset_cells_have_no_witness():
    assert uniformity_audit(Boxing.trivial(6), 0.1).witnesses == []


def test_affine_half_cell_is_a_witness():
    triv = Boxing.trivial(4)
    labels = np.array(triv.labels)
    labels[0, 0, 1, :] = np.arange(16) >> 3 & 1
    b = Boxing(triv.subspace, 2, labels)
    ua = uniformity_audit(b, 0.1)
    assert len(ua.witnesses) == 1
    w = ua.witnesses[0]
    assert (w.axis, abs(w.coefficient), w.character) == (1, 0.5, 0b1000)
    assert not ua.holds


# -------------------------------------------------------- quasirandomness

def test_complete_bipartite_passes():
    for shape in ((5, 7), (40, 30)):
        assert density_witness(np.ones(shape, bool), 0.01).witness is None


@pytest.mark.parametrize("side", [8, 12, 32])
def test_block_diagonal_has_witness(side):
    M = np.zeros((side, side), bool)
    h = side // 2
    M[:h, :h] = M[h:, h:] = True
    for eps in (0.25, 0.1):
        res = density_witness(M, eps)
        w = res.witness
        assert w is not None
        assert w.rows.size >= eps * side and w.cols.size >= eps * side
        assert w.deviation >= eps
        assert M[np.ix_(w.rows, w.cols)].mean() == pytest.approx(w.density)


def test_random_box_passes_sampled_search():
    for seed in range(10):
        M = np.random.default_rng(seed).random((32, 32)) < 0.5
        res = density_witness(M, 0.45, rng=np.random.default_rng(seed))
        assert res.mode == "sampled"
        assert res.witness is None


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.sampled_from([0.2, 0.3, 0.5]), st.integers(0, 2**31 - 1))
def test_exhaustive_search_finds_the_true_optimum(nb, nc, eps, seed):
    M = np.random.default_rng(seed).random((nb, nc)) < 0.5
    res = density_witness(M, eps)
    truth = max_density_deviation(M, eps)
    assert res.complete
    if truth >= eps:
        assert res.witness is not None and res.witness.deviation == pytest.approx(truth)
    else:
        assert res.witness is None


def test_sampled_search_agrees_with_exact_on_small_sides():
    # sides of 12 allow both: compare the sampled enumeration with the complete one
    from corners.regularity import audit as qa

    agree = 0
    for seed in range(20):
        M = np.random.default_rng(seed).random((12, 12)) < 0.5
        exact = density_witness(M, 0.3)
        s = qa._Search(M, 0.3)
        s.sampled(np.random.default_rng(seed), 10_000)
        agree += (s.result() is None) == (exact.witness is None)
    assert agree == 20


def test_quasirandom_audit_reports_witness_mass():
    n = 4
    g = FiniteAbelianGroup.vector(2, n)
    ind = np.zeros((16, 16), bool)
    ind[:8, :8] = ind[8:, 8:] = True
    qa = quasirandom_audit(Boxing.trivial(n), PlaneSet(g, ind), 0.2)
    assert not qa.holds
    assert qa.boxes[0].bad_mass["BC"] == 1.0
    assert "one-sided" in qa.to_dict()["search"]


# ------------------------------------------------------------ refinements

def test_refine_a_single_witness_adds_one_codim():
    triv = Boxing.trivial(4)
    labels = np.array(triv.labels)
    labels[0, 0, 0, :] = np.arange(16) & 1
    b = Boxing(triv.subspace, 2, labels)
    A = rand_set(4, 0.5, 0)
    steps = []
    out = refine_A(b, A, 0.2, report=steps)
    assert out.codim == 1 and out.m == 2
    s = steps[0]
    assert s.after.e1 - s.before.e1 >= 0.2**3 / (12 * 2**6)
    assert s.after.e2 >= s.before.e2
    # the split cell is now a union of full cosets in every box
    assert uniformity_audit(out, 0.2).witnesses == []


def test_refine_a_requires_a_witness_and_respects_cap():
    A = rand_set(4, 0.5, 1)
    with pytest.raises(DomainError):
        refine_A(Boxing.trivial(4), A, 0.2)
    b = random_boxing(4, 0, 3, np.random.default_rng(0))
    with pytest.raises(ResourceError) as exc:
        refine_A(b, A, 0.2, caps=Caps(codim=0))
    assert exc.value.partial is b


def test_refine_b_block_diagonal_strictly_increases_e2():
    n = 4
    g = FiniteAbelianGroup.vector(2, n)
    ind = np.zeros((16, 16), bool)
    ind[:8, :8] = ind[8:, 8:] = True
    A = PlaneSet(g, ind)
    b = Boxing.trivial(n)
    steps = []
    out = refine_B(b, A, 0.25, report=steps)
    assert steps[0].after.e2 > steps[0].before.e2
    assert steps[0].after.e2 - steps[0].before.e2 >= 0.25**6 / 3
    assert out.m > 1


def test_refine_b_rejects_no_witnesses_and_respects_cap():
    g = FiniteAbelianGroup.vector(2, 4)
    full = PlaneSet(g, np.ones((16, 16), bool))
    with pytest.raises(DomainError):
        refine_B(Boxing.trivial(4), full, 0.2)
    ind = np.zeros((16, 16), bool)
    ind[:8, :8] = True
    with pytest.raises(ResourceError):
        refine_B(Boxing.trivial(4), PlaneSet(g, ind), 0.2, caps=Caps(m=1))


def test_scripted_refinements_obey_energy_laws():
    steps = []
    eps = 0.1
    for seed in range(2):
        A = rand_set(6, 0.5, seed)
        b = Boxing.trivial(6)
        for _ in range(10):
            ua = uniformity_audit(b, eps)
            if not ua.holds:
                b = refine_A(b, A, eps, audit=ua, report=steps)
                continue
            qa = quasirandom_audit(b, A, eps)
            if not qa.witnesses:
                break
            b = refine_B(b, A, eps, audit=qa, report=steps)
    assert {s.op for s in steps} == {"refine_A", "refine_B"}
    for s in steps:
        assert s.after.e2 >= s.before.e2
        if s.op == "refine_A":
            assert s.after.e1 - s.before.e1 >= eps**3 / (12 * s.m_before**6)
            assert s.m_after == s.m_before
        else:
            assert s.after.e2 > s.before.e2


# ---------------------------------------------------------- full procedure

def test_full_set_is_regular_at_once():
    g = FiniteAbelianGroup.vector(2, 6)
    r = find_regular_boxing(PlaneSet(g, np.ones((64, 64), bool)), 0.3)
    assert r.success and len(r.trajectory) == 1
    assert r.boxing.codim == 0 and r.boxing.m == 1


def test_random_set_terminates_within_caps():
    r = find_regular_boxing(rand_set(8, 0.5, 3), 0.3)
    assert r.success
    assert r.boxing.codim <= 6 and r.boxing.m <= 32
    assert r.refine_b_calls <= math.ceil(3 / 0.3**6)
    csv = r.trajectory_csv().splitlines()
    assert csv[0] == "step,phase,op,codim,m,e1,e2"


def test_cap_exhaustion_returns_diagnostic():
    r = find_regular_boxing(rand_set(6, 0.5, 0), 0.1, caps=Caps(codim=1))
    assert not r.success and "cap" in r.diagnostic
    e2 = [row.e2 for row in r.trajectory]
    assert all(b >= a - 1e-12 for a, b in zip(e2, e2[1:]))
    for prev, row in zip(r.trajectory, r.trajectory[1:]):
        if row.phase == "ii" and prev.phase == "ii":
            assert row.e1 >= prev.e1 - 1e-12


def test_non_binary_group_rejected():
    A = random_plane_set(FiniteAbelianGroup.cyclic(8), 0.5, np.random.default_rng(0))
    with pytest.raises(DomainError):
        find_regular_boxing(A, 0.3)


# ------------------------------------------------------------ box kernels

def test_box_kernel_of_full_set_is_one():
    g = FiniteAbelianGroup.vector(2, 5)
    bk = box_kernel(Boxing.trivial(5), PlaneSet(g, np.ones((32, 32), bool)), 0, 0)
    assert np.all(bk.kernel.values == 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_box_kernel_expectation_is_box_density(seed):
    rng = np.random.default_rng(seed)
    b = random_boxing(6, 2, 3, rng)
    A = rand_set(6, rng.random(), seed)
    for cx, cy in [(0, 0), (1, 3), (3, 2)]:
        bk = box_kernel(b, A, cx, cy)
        assert abs(bk.unclipped_expectation - box_density(b, A, cx, cy)) <= 1e-12
        assert bk.alpha_v == box_density(b, A, cx, cy)
        assert expectation(bk.kernel) <= bk.alpha_v + 1e-12


def test_clipping_loss_small_on_uniform_boxes():
    A = rand_set(6, 0.6, 9)
    eps = 0.3
    r = find_regular_boxing(A, eps)
    ua = uniformity_audit(r.boxing, eps)
    failing = {w.box for w in ua.witnesses}
    for cx, cy in r.boxing.boxes():
        if (cx, cy) not in failing:
            assert box_kernel(r.boxing, A, cx, cy).clipping_loss <= eps


def test_empty_cells_get_zero_mass():
    triv = Boxing.trivial(3)
    b = Boxing(triv.subspace, 3, triv.labels)
    bk = box_kernel(b, rand_set(3, 0.5, 0), 0, 0)
    assert bk.kernel.p.tolist() == [1.0, 0.0, 0.0]
    assert np.all(bk.kernel.values[1:] == 0)


# --------------------------------------------------------------- counting

def test_corners_within_trivial_and_full_subspace():
    A = rand_set(5, 0.5, 1)
    zero = corners_within_W(A, Subspace.zero(5))
    assert zero.total == A.size == zero.degenerate
    full = corners_within_W(A, Subspace.full(5))
    assert full.total == int(census(A).counts.sum())


@pytest.mark.parametrize("seed", range(3))
def test_box_corner_counts_add_up(seed):
    rng = np.random.default_rng(seed)
    b = random_boxing(6, int(rng.integers(0, 4)), 2, rng)
    A = rand_set(6, 0.5, seed)
    total = sum(box_corner_count(b, A, cx, cy) for cx, cy in b.boxes())
    assert total == corners_within_W(A, b.subspace).total


def test_counting_check_on_regular_boxing():
    A = rand_set(8, 0.5, 4)
    r = find_regular_boxing(A, 0.3)
    rep = counting_check(r.boxing, A, 0.3)
    assert rep.holds
    assert json.dumps(rep.to_dict())


# ---------------------------------------------------------- serialization

def test_boxing_json_round_trip():
    b = random_boxing(5, 2, 3, np.random.default_rng(11))
    again = Boxing.from_json(b.to_json())
    assert again == b
    assert len(b.to_dict()["boxes"]) == 4**2


def test_boxing_json_rejects_bad_partitions():
    d = Boxing.trivial(2).to_dict()
    d["boxes"][0]["B"] = [[0, 1, 2]]
    with pytest.raises(ValidationError, match="cover"):
        Boxing.from_dict(d)
    d["boxes"][0]["B"] = [[0, 1, 2, 3, 3]]
    with pytest.raises(ValidationError, match="overlap"):
        Boxing.from_dict(d)
    with pytest.raises(ValidationError, match="line 1"):
        Boxing.from_json("{oops")
