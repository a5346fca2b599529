"""Alignment and tree quality metrics: sum-of-pairs and JC69 log-likelihood.

The SP rule is the penalty form: per column a pair scores 0 when equal,
1 when the residues differ, 2 when exactly one side is a gap, and 0 when
both are gaps (a both-gap column carries no pairwise information). Lower
is better under this rule; reports print the raw value only.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import LeafMismatch, LengthMismatch, ProteinUnsupported, TooFewSequences
from .msa import Msa

_GAPB = ord("-")
_NUC_CODE = {"A": 0, "C": 1, "G": 2, "T": 3, "U": 3}


@dataclass(frozen=True)
class SpReport:
    total_sp: int
    n_pairs: int

    @property
    def avg_sp(self) -> Fraction:
        return Fraction(self.total_sp, self.n_pairs)

    def avg_str(self) -> str:
        return f"{self.total_sp / self.n_pairs:.1f}"


@dataclass(frozen=True)
class TreeScore:
    log_likelihood: float
    model: str = "JC69"


def sp_pair(row_a: str, row_b: str) -> int:
    """Pairwise SP penalty of two equal-length gap-bearing rows."""
    if len(row_a) != len(row_b):
        raise LengthMismatch(f"row lengths differ: {len(row_a)} vs {len(row_b)}")
    a = np.frombuffer(row_a.encode("ascii"), dtype=np.uint8)
    b = np.frombuffer(row_b.encode("ascii"), dtype=np.uint8)
    ga = a == _GAPB
    gb = b == _GAPB
    one_gap = ga ^ gb
    mism = ~ga & ~gb & (a != b)
    return int(2 * np.count_nonzero(one_gap) + np.count_nonzero(mism))


def sp_report(msa: Msa) -> SpReport:
    """Total and average SP over all unordered row pairs."""
    n = len(msa)
    if n < 2:
        raise TooFewSequences("SP needs at least 2 rows")
    rows = msa.row_strings()
    arr = np.frombuffer("".join(rows).encode("ascii"), dtype=np.uint8)
    arr = arr.reshape(n, msa.n_cols)
    gaps = arr == _GAPB
    total = 0
    for i in range(n - 1):
        ga = gaps[i]
        gb = gaps[i + 1 :]
        one_gap = ga ^ gb
        mism = ~ga & ~gb & (arr[i] != arr[i + 1 :])
        total += int(2 * np.count_nonzero(one_gap) + np.count_nonzero(mism))
    return SpReport(total_sp=total, n_pairs=n * (n - 1) // 2)


def _tip_partials(row: str) -> np.ndarray:
    """[4, L] conditional likelihoods; gaps/N/ambiguity are missing data."""
    out = np.zeros((4, len(row)), dtype=np.float64)
    for j, ch in enumerate(row):
        code = _NUC_CODE.get(ch)
        if code is None:
            out[:, j] = 1.0
        else:
            out[code, j] = 1.0
    return out


def jc69_transition(t: float) -> np.ndarray:
    """JC69 transition matrix at branch length t (substitutions/site)."""
    t = max(float(t), 0.0)
    e = np.exp(-4.0 * t / 3.0)
    same = 0.25 + 0.75 * e
    diff = 0.25 - 0.25 * e
    p = np.full((4, 4), diff)
    np.fill_diagonal(p, same)
    return p


def jc69_loglik(msa: Msa, tree) -> TreeScore:
    """Felsenstein pruning under JC69 with uniform base frequencies.

    Tree leaves must be bijective with Msa row ids; columns where a tip
    has a gap or an ambiguous residue contribute partial likelihood 1 at
    that tip. Returns the natural-log likelihood summed over columns.
    """
    if msa.alphabet is not None and msa.alphabet.kind == "protein":
        raise ProteinUnsupported("JC69 applies to nucleotide alignments only")
    ids = msa.ids()
    if len(set(ids)) != len(ids):
        raise LeafMismatch("duplicate row ids in the alignment")
    leaf_names = sorted(tree.leaf_labels.values())
    if sorted(ids) != leaf_names:
        raise LeafMismatch(
            f"tree has {len(leaf_names)} leaves, alignment has {len(ids)} rows, "
            "or the label sets differ"
        )
    rows = dict(zip(ids, msa.row_strings()))
    length = msa.n_cols

    root = tree.root
    if root is None or root in tree.leaf_labels:
        internal = [u for u in tree.nodes() if u not in tree.leaf_labels]
        if internal:
            root = min(internal)
    root, children, postorder = tree.rooted(root)
    partial: dict[int, np.ndarray] = {}
    logscale = np.zeros(length, dtype=np.float64)
    for node in postorder:
        kids = children.get(node, [])
        if not kids:
            partial[node] = _tip_partials(rows[tree.leaf_labels[node]])
            continue
        acc = np.ones((4, length), dtype=np.float64)
        if node in tree.leaf_labels:
            # a labeled root (two-leaf tree) still contributes its own column data
            acc *= _tip_partials(rows[tree.leaf_labels[node]])
        for child, t in kids:
            acc *= jc69_transition(t) @ partial[child]
            del partial[child]
        scale = acc.max(axis=0)
        nonzero = scale > 0
        acc[:, nonzero] /= scale[nonzero]
        ls = np.full(length, -np.inf)
        np.log(scale, where=nonzero, out=ls)
        logscale += ls
        partial[node] = acc
    col_lik = 0.25 * partial[root].sum(axis=0)
    with np.errstate(divide="ignore"):
        ll = float(np.sum(np.log(col_lik) + logscale))
    return TreeScore(log_likelihood=ll)
