import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corners.errors import DomainError, ResourceError, ValidationError
from corners.groups import (
    CornerCensus,
    FiniteAbelianGroup,
    PlaneSet,
    census,
    census_oracle,
    max_popular_difference,
    random_plane_set,
)

GROUPS = [
    FiniteAbelianGroup.cyclic(1),
    FiniteAbelianGroup.cyclic(5),
    FiniteAbelianGroup.cyclic(12),
    FiniteAbelianGroup.vector(2, 3),
    FiniteAbelianGroup.vector(3, 2),
    FiniteAbelianGroup.product(FiniteAbelianGroup.cyclic(4), FiniteAbelianGroup.vector(2, 2)),
    FiniteAbelianGroup.product(FiniteAbelianGroup.cyclic(2), FiniteAbelianGroup.cyclic(3)),
]


def test_add_examples():
    assert FiniteAbelianGroup.cyclic(5).add(3, 4) == 2
    assert FiniteAbelianGroup.vector(2, 3).add(0b101, 0b110) == 0b011


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.describe())
def test_group_axioms(g):
    n = g.order
    xs = np.arange(n)
    table = g.add(xs[:, None], xs[None, :])
    assert np.array_equal(table, table.T)
    assert np.array_equal(table[0], xs)
    assert np.all(g.add(xs, g.neg(xs)) == 0)
    for row in table:
        assert sorted(row) == list(range(n))
    a, b, c = np.meshgrid(xs, xs, xs, indexing="ij")
    assert np.array_equal(g.add(g.add(a, b), c), g.add(a, g.add(b, c)))


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.describe())
def test_index_round_trip(g):
    for i in range(g.order):
        assert g.index(g.unindex(i)) == i
    assert FiniteAbelianGroup.parse(g.describe()) == g


def test_product_order_and_errors():
    g = FiniteAbelianGroup.product(FiniteAbelianGroup.cyclic(4), FiniteAbelianGroup.vector(3, 2))
    assert g.order == 36
    with pytest.raises(DomainError):
        g.add(36, 0)
    with pytest.raises(DomainError):
        g.unindex(-1)
    with pytest.raises(ValidationError):
        FiniteAbelianGroup.parse("torus 3")


def test_census_full_set():
    g = FiniteAbelianGroup.cyclic(3)
    c = census(PlaneSet(g, np.ones((3, 3), bool)))
    assert c.counts.tolist() == [9, 9, 9]


def test_census_single_row():
    g = FiniteAbelianGroup.cyclic(3)
    ind = np.zeros((3, 3), bool)
    ind[0, :] = True
    c = census(PlaneSet(g, ind))
    assert c.counts.tolist() == [3, 0, 0]


def test_census_matches_oracle_cyclic():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = FiniteAbelianGroup.cyclic(int(rng.integers(4, 13)))
        A = random_plane_set(g, float(rng.random()), rng)
        assert census(A).to_csv() == census_oracle(A).to_csv()


@pytest.mark.parametrize("g", GROUPS + [FiniteAbelianGroup.vector(2, 6),
                                        FiniteAbelianGroup.cyclic(64)],
                         ids=lambda g: g.describe())
def test_census_matches_oracle_all_paths(g):
    rng = np.random.default_rng(g.order)
    for dens in (0.3, 0.7):
        A = random_plane_set(g, dens, rng)
        assert np.array_equal(census(A).counts, census_oracle(A).counts)
        assert np.array_equal(census(A, threads=3).counts, census_oracle(A).counts)


def test_census_beyond_one_word():
    # 130 columns span three words; compare against a direct numpy evaluation
    rng = np.random.default_rng(8)
    for g in (FiniteAbelianGroup.cyclic(130), FiniteAbelianGroup.cyclic(65),
              FiniteAbelianGroup.vector(2, 7), FiniteAbelianGroup.vector(2, 8)):
        A = random_plane_set(g, 0.5, rng)
        ind = A.indicator
        for d in sorted({x % g.order for x in (0, 1, 63, 64, 65, 77, g.order - 1)}):
            s = g.shift_table(d)
            direct = int((ind & ind[s, :] & ind[:, s]).sum())
            assert census(A, ds=[d]).counts[d] == direct


def test_oracle_limits_and_trivia():
    g = FiniteAbelianGroup.cyclic(65)
    with pytest.raises(ResourceError):
        census_oracle(PlaneSet(g, np.zeros((65, 65), bool)))
    g = FiniteAbelianGroup.cyclic(6)
    assert census_oracle(PlaneSet(g, np.zeros((6, 6), bool))).counts.sum() == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.integers(0, 9), st.integers(0, 9))
def test_census_properties(n, seed, a, b):
    g = FiniteAbelianGroup.cyclic(n)
    rng = np.random.default_rng(seed)
    A = random_plane_set(g, float(rng.random()), rng)
    c = census(A)
    assert c.counts[0] == A.size
    assert np.all(c.counts <= A.size) and np.all(c.counts >= 0)
    # translation invariance
    assert np.array_equal(census(A.translate(a % n, b % n)).counts, c.counts)
    # total corner triples by brute force
    ind = A.indicator
    total = sum(
        int(ind[x, y] and ind[(x + d) % n, y] and ind[x, (y + d) % n])
        for x in range(n) for y in range(n) for d in range(n))
    assert c.counts.sum() == total


def test_max_popular_difference():
    g = FiniteAbelianGroup.cyclic(3)
    c = CornerCensus(g, np.array([5, 3, 3]), 5)
    assert max_popular_difference(c) == (1, 3)
    full = census(PlaneSet(FiniteAbelianGroup.cyclic(4), np.ones((4, 4), bool)))
    assert max_popular_difference(full) == (1, 16)
    with pytest.raises(DomainError):
        max_popular_difference(CornerCensus(FiniteAbelianGroup.cyclic(1), np.array([1]), 1))


def test_max_popular_difference_matches_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = FiniteAbelianGroup.cyclic(int(rng.integers(2, 16)))
        A = random_plane_set(g, 0.5, rng)
        d, cnt = max_popular_difference(census(A))
        assert cnt == census_oracle(A).counts[1:].max()


def test_plane_set_text_round_trip():
    rng = np.random.default_rng(1)
    g = FiniteAbelianGroup.product(FiniteAbelianGroup.cyclic(3), FiniteAbelianGroup.vector(2, 1))
    A = random_plane_set(g, 0.5, rng)
    text = A.to_text()
    assert text.startswith("group: product cyclic 3 x vector 2 1\n")
    B = PlaneSet.from_text(text)
    assert B.group == g and np.array_equal(B.indicator, A.indicator)
    with pytest.raises(ValidationError, match="line 3"):
        PlaneSet.from_text("group: cyclic 2\n10\n1x\n")
