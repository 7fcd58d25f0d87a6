"""Simulated distributed layout: row blocks of A, multiplier ownership, and
the row traffic needed to assemble the diagonal augmentation.

Nothing here sends messages; the metrics count what a distributed run would
have to exchange.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseMatrix, transpose


@dataclass(frozen=True)
class RowPartition:
    n_procs: int
    owner_of_row: np.ndarray
    contiguous: bool = True
    meta: dict = field(default_factory=dict)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.owner_of_row, minlength=self.n_procs)


@dataclass(frozen=True)
class MultiplierAssignment:
    owner_of_mult: np.ndarray
    counts: np.ndarray
    normative: bool = True

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["multiplier_id", "owner"])
            for i, p in enumerate(self.owner_of_mult):
                w.writerow([i, int(p)])


def partition_rows(a: SparseMatrix, n_procs: int, refine: bool = False) -> RowPartition:
    """Contiguous blocks of rows, sizes differing by at most one.

    The first ``n_u % n_procs`` blocks get the extra row.  With ``refine`` a
    single greedy pass moves rows to the neighbouring block holding most of
    their couplings, when that lowers the edge cut and keeps every block
    within one row of the ideal size.
    """
    n = a.n_rows
    if n_procs < 1:
        raise ValueError("n_procs must be >= 1")
    if n_procs > n:
        raise ValueError(f"n_procs={n_procs} exceeds the number of rows {n}")
    base, extra = divmod(n, n_procs)
    sizes = np.full(n_procs, base)
    sizes[:extra] += 1
    owner = np.repeat(np.arange(n_procs), sizes)
    if not refine or n_procs == 1:
        return RowPartition(n_procs, owner, True, {"strategy": "contiguous"})

    lo_size, hi_size = max(base - 1, 1), base + 2
    owner = owner.copy()
    sizes = sizes.copy()
    moved = 0
    for i in range(n):
        cols = a.col_indices[a.row_offsets[i]:a.row_offsets[i + 1]]
        cols = cols[cols != i]
        if cols.size == 0:
            continue
        links = np.bincount(owner[cols], minlength=n_procs)
        cur = owner[i]
        best = int(np.argmax(links))
        if best != cur and links[best] > links[cur] and sizes[cur] > lo_size and sizes[best] < hi_size:
            owner[i] = best
            sizes[cur] -= 1
            sizes[best] += 1
            moved += 1
    return RowPartition(n_procs, owner, False,
                        {"strategy": "contiguous + greedy edge-cut pass", "moved_rows": moved})


def edge_cut(a: SparseMatrix, rp: RowPartition) -> int:
    rows = a.row_ids()
    off = rows != a.col_indices
    return int(np.sum(rp.owner_of_row[rows[off]] != rp.owner_of_row[a.col_indices[off]]) // 2)


def _candidates(bt: SparseMatrix, rp: RowPartition, l: int) -> np.ndarray:
    rows = bt.col_indices[bt.row_offsets[l]:bt.row_offsets[l + 1]]
    return np.unique(rp.owner_of_row[rows])


def assign_multipliers(b: SparseMatrix, rp: RowPartition, concurrent: bool = False) -> MultiplierAssignment:
    """Give each multiplier to the least-loaded process owning one of its rows.

    Multipliers are visited in index order; ties go to the lowest process
    index and counts are updated immediately, so the result depends on the
    visiting order.  ``concurrent=True`` mimics per-process sweeps over
    contiguous chunks of multipliers with process-local counts; it is an
    experiment, not the reference behaviour.
    """
    if len(rp.owner_of_row) != b.n_rows:
        raise ValueError("row partition does not match B")
    bt = transpose(b)
    n_t = b.n_cols
    owner = np.full(n_t, -1, dtype=np.int64)
    counts = np.zeros(rp.n_procs, dtype=np.int64)
    if concurrent:
        bounds = np.linspace(0, n_t, rp.n_procs + 1).astype(int)
        chunks = [range(bounds[p], bounds[p + 1]) for p in range(rp.n_procs)]
    else:
        chunks = [range(n_t)]
    for chunk in chunks:
        local = np.zeros(rp.n_procs, dtype=np.int64)
        for l in chunk:
            cand = _candidates(bt, rp, l)
            if cand.size == 0:
                raise ValueError(f"multiplier {l} has an empty column in B")
            p = int(cand[np.argmin(local[cand])])  # argmin picks the first, i.e. lowest index
            owner[l] = p
            local[p] += 1
        counts += local
    return MultiplierAssignment(owner, counts, normative=not concurrent)


def comm_volume(b: SparseMatrix, rp: RowPartition, ma: MultiplierAssignment) -> dict:
    """Rows of A a process must receive to form its local blocks A|_{b_i}.

    A (row, destination) pair is counted once even if several multipliers on
    the destination need the same row.
    """
    bt = transpose(b)
    needed = set()
    for l in range(b.n_cols):
        dest = int(ma.owner_of_mult[l])
        rows = bt.col_indices[bt.row_offsets[l]:bt.row_offsets[l + 1]]
        remote = rows[rp.owner_of_row[rows] != dest]
        needed.update((int(r), dest) for r in remote)
    with_cand = np.zeros(rp.n_procs, dtype=bool)
    for l in range(b.n_cols):
        with_cand[_candidates(bt, rp, l)] = True
    c = ma.counts[with_cand]
    balance = float(c.max() / max(1, c.min())) if c.size else 1.0
    per_dest = np.zeros(rp.n_procs, dtype=np.int64)
    for _, dest in needed:
        per_dest[dest] += 1
    return {"rows_exchanged": len(needed), "balance_ratio": balance,
            "rows_received_per_process": per_dest.tolist()}
