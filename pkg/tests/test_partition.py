import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from racp.partition import RowPartition, assign_multipliers, comm_volume, edge_cut, partition_rows
from racp.sparse import SparseMatrix


def b_from_supports(n_u, supports):
    d = np.zeros((n_u, len(supports)))
    for j, rows in enumerate(supports):
        d[list(rows), j] = 1.0
    return SparseMatrix.from_dense(d)


def brute_force_exchange(b, owner_of_row, owner_of_mult):
    """Double loop over (process, row): a row is sent to p if p owns a
    multiplier touching it and p does not own the row."""
    bd = b.to_dense()
    n_procs = max(owner_of_row.max(), owner_of_mult.max()) + 1
    total = 0
    for p in range(n_procs):
        for r in range(bd.shape[0]):
            if owner_of_row[r] == p:
                continue
            if any(bd[r, l] != 0 and owner_of_mult[l] == p for l in range(bd.shape[1])):
                total += 1
    return total


def test_even_split():
    rp = partition_rows(SparseMatrix.identity(10), 2)
    assert rp.owner_of_row.tolist() == [0] * 5 + [1] * 5


def test_remainder_rule():
    assert partition_rows(SparseMatrix.identity(10), 3).sizes().tolist() == [4, 3, 3]


def test_single_process():
    rp = partition_rows(SparseMatrix.identity(7), 1)
    assert np.all(rp.owner_of_row == 0)


def test_too_many_processes():
    with pytest.raises(ValueError):
        partition_rows(SparseMatrix.identity(3), 4)


def test_alternating_greedy():
    rp = partition_rows(SparseMatrix.identity(4), 2)
    b = b_from_supports(4, [(0, 2), (1, 3), (0, 3), (1, 2)])
    ma = assign_multipliers(b, rp)
    assert ma.owner_of_mult.tolist() == [0, 1, 0, 1]
    assert ma.counts.tolist() == [2, 2]


def test_no_choice():
    rp = partition_rows(SparseMatrix.identity(6), 2)
    b = b_from_supports(6, [(0, 1), (1, 2), (0,), (2,)])
    ma = assign_multipliers(b, rp)
    assert ma.counts.tolist() == [4, 0]


def test_one_process_gets_all():
    rp = partition_rows(SparseMatrix.identity(5), 1)
    ma = assign_multipliers(b_from_supports(5, [(0, 4), (2,)]), rp)
    assert ma.owner_of_mult.tolist() == [0, 0]


def test_local_multipliers_need_no_exchange():
    rp = partition_rows(SparseMatrix.identity(6), 2)
    b = b_from_supports(6, [(0, 1), (4, 5)])
    cv = comm_volume(b, rp, assign_multipliers(b, rp))
    assert cv["rows_exchanged"] == 0


def test_single_split_multiplier():
    rp = partition_rows(SparseMatrix.identity(4), 2)
    b = b_from_supports(4, [(1, 2)])
    cv = comm_volume(b, rp, assign_multipliers(b, rp))
    assert cv["rows_exchanged"] == 1


def test_fracture_cube_split(cube2):
    # rows are numbered along x first, so two halves separate the sides of the fracture
    rp = partition_rows(cube2.a, 2)
    ma = assign_multipliers(cube2.b, rp)
    cv = comm_volume(cube2.b, rp, ma)
    assert cv["rows_exchanged"] == brute_force_exchange(cube2.b, rp.owner_of_row, ma.owner_of_mult)
    assert cv["rows_exchanged"] > 0


def test_assignment_csv(tmp_path):
    rp = partition_rows(SparseMatrix.identity(4), 2)
    ma = assign_multipliers(b_from_supports(4, [(0, 2), (1, 3)]), rp)
    ma.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines() == ["multiplier_id,owner", "0,0", "1,1"]


def test_refine_keeps_balance(cube4):
    rp = partition_rows(cube4.a, 4, refine=True)
    base = cube4.n_u // 4
    assert rp.sizes().min() >= base - 1 and rp.sizes().max() <= base + 2
    assert edge_cut(cube4.a, rp) <= edge_cut(cube4.a, partition_rows(cube4.a, 4))


def test_concurrent_flagged(cube4):
    rp = partition_rows(cube4.a, 3)
    ma = assign_multipliers(cube4.b, rp, concurrent=True)
    assert not ma.normative
    assert ma.counts.sum() == cube4.n_t


def test_row_partition_mismatch(cube2):
    rp = RowPartition(2, np.zeros(3, dtype=np.int64))
    with pytest.raises(ValueError):
        assign_multipliers(cube2.b, rp)


def random_b(rng, n_u, n_t, k):
    supports = [rng.choice(n_u, size=k, replace=False) for _ in range(n_t)]
    return b_from_supports(n_u, supports)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6))
def test_assignment_valid_and_deterministic(seed, n_procs):
    rng = np.random.default_rng(seed)
    n_u = int(rng.integers(n_procs, 60))
    n_t = int(rng.integers(1, 40))
    b = random_b(rng, n_u, n_t, min(3, n_u))
    rp = partition_rows(SparseMatrix.identity(n_u), n_procs)
    ma = assign_multipliers(b, rp)
    bd = b.to_dense()
    for l, p in enumerate(ma.owner_of_mult):
        assert p in rp.owner_of_row[bd[:, l] != 0]
    again = assign_multipliers(b, rp)
    assert np.array_equal(ma.owner_of_mult, again.owner_of_mult)
    cv = comm_volume(b, rp, ma)
    assert cv["rows_exchanged"] == brute_force_exchange(b, rp.owner_of_row, ma.owner_of_mult)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5), st.integers(1, 50))
def test_balance_when_all_processes_are_candidates(seed, n_procs, n_t):
    rng = np.random.default_rng(seed)
    n_u = n_procs * 4
    rp = partition_rows(SparseMatrix.identity(n_u), n_procs)
    # every column touches one row of every process
    supports = [[p * 4 + int(rng.integers(4)) for p in range(n_procs)] for _ in range(n_t)]
    ma = assign_multipliers(b_from_supports(n_u, supports), rp)
    assert ma.counts.max() - ma.counts.min() <= 1
