"""Pairwise alignment: local (Smith-Waterman style) and global, affine gaps.

A gap of length k costs W_k = gap_open + gap_extend * (k - 1); the linear
scheme is gap_open == gap_extend. The affine three-lane recurrence is used
in place of the per-cell max-over-k scan; both are exactly equal for this
W_k family. Traceback ties resolve diagonal > up (gap in b) > left (gap in
a), and a gap run closes as early as the score allows, which makes every
alignment in the package bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matrices
from .errors import AlphabetMismatch, EmptyInput, SequenceTooLong
from .kernels import nw_align_kernel, sw_fill_kernel
from .seqio import DNA, PROTEIN, Alphabet, Sequence

GAP = "-"

# Guard bound: reject inputs whose worst-case |score| could leave int32
# territory (with margin for the lane sentinel arithmetic).
_SCORE_LIMIT = 1 << 29

# Wildcard (N/X) scores this value against everything, itself included,
# in matrix-backed schemes; parametric nucleotide schemes use their own
# mismatch value instead.
_MATRIX_WILDCARD_SCORE = -1


@dataclass(frozen=True)
class ScoreScheme:
    """Substitution function plus affine gap parameters for one alphabet."""

    alphabet: Alphabet
    matrix: np.ndarray  # int32, (alphabet.size, alphabet.size)
    gap_open: int
    gap_extend: int
    name: str = "custom"

    def __post_init__(self):
        if self.gap_open < 1:
            raise ValueError("gap_open must be >= 1 so that W_1 > 0")
        if self.gap_extend < 0:
            raise ValueError("gap_extend must be >= 0")
        asz = self.alphabet.size
        if self.matrix.shape != (asz, asz):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({asz}, {asz})")

    def _check_positive_diagonal(self) -> "ScoreScheme":
        # built-in schemes must reward canonical self-matches
        diag = np.diagonal(self.matrix)[: self.alphabet.n_canonical]
        if (diag <= 0).any():
            raise ValueError("s(a, a) must be positive for canonical residues")
        return self

    def w(self, k: int) -> int:
        """Penalty of a gap of length k (W_0 = 0)."""
        if k <= 0:
            return 0
        return self.gap_open + self.gap_extend * (k - 1)

    def score(self, x: str, y: str) -> int:
        ex = self.alphabet.encode(x)
        ey = self.alphabet.encode(y)
        return int(self.matrix[ex[0], ey[0]])

    @property
    def max_abs_score(self) -> int:
        return int(np.abs(self.matrix).max())

    @classmethod
    def nucleotide(
        cls,
        alphabet: Alphabet = DNA,
        match: int = 1,
        mismatch: int = -1,
        gap_open: int = 2,
        gap_extend: int = 1,
    ) -> "ScoreScheme":
        """Match/mismatch scheme; the wildcard N mismatches everything."""
        if alphabet.kind == "protein":
            raise ValueError("nucleotide scheme needs a dna/rna alphabet")
        asz = alphabet.size
        m = np.full((asz, asz), mismatch, dtype=np.int32)
        np.fill_diagonal(m, match)
        wild = alphabet.n_canonical
        m[wild, :] = mismatch
        m[:, wild] = mismatch
        return cls(
            alphabet, m, gap_open, gap_extend, name=f"match{match}/mis{mismatch}"
        )._check_positive_diagonal()

    @classmethod
    def from_matrix_scores(
        cls,
        scores: dict[tuple[str, str], int],
        alphabet: Alphabet = PROTEIN,
        gap_open: int = 11,
        gap_extend: int = 1,
        name: str = "matrix",
    ) -> "ScoreScheme":
        """Build a scheme from NCBI-style letter-pair scores.

        Letters outside the alphabet are ignored; the wildcard row and
        column are forced to the mismatch convention.
        """
        asz = alphabet.size
        m = np.full((asz, asz), _MATRIX_WILDCARD_SCORE, dtype=np.int32)
        canon = alphabet.canonical
        for i, x in enumerate(canon):
            for j, y in enumerate(canon):
                if (x, y) in scores:
                    m[i, j] = scores[(x, y)]
        wild = alphabet.n_canonical
        m[wild, :] = _MATRIX_WILDCARD_SCORE
        m[:, wild] = _MATRIX_WILDCARD_SCORE
        return cls(
            alphabet, m, gap_open, gap_extend, name=name
        )._check_positive_diagonal()

    @classmethod
    def blosum62(cls, gap_open: int = 11, gap_extend: int = 1,
                 alphabet: Alphabet = PROTEIN) -> "ScoreScheme":
        scores = matrices.parse_ncbi_matrix(matrices.BLOSUM62_TEXT)
        return cls.from_matrix_scores(
            scores, alphabet, gap_open, gap_extend, name="BLOSUM62"
        )

    @classmethod
    def from_ncbi_file(cls, path, alphabet: Alphabet = PROTEIN,
                       gap_open: int = 11, gap_extend: int = 1) -> "ScoreScheme":
        scores = matrices.load_matrix_file(path)
        return cls.from_matrix_scores(
            scores, alphabet, gap_open, gap_extend, name=str(path)
        )


def default_scheme(alphabet: Alphabet) -> ScoreScheme:
    if alphabet.kind == "protein":
        return ScoreScheme.blosum62(alphabet=alphabet)
    return ScoreScheme.nucleotide(alphabet=alphabet)


@dataclass
class DpMatrix:
    """Filled local-alignment matrix; ``h`` holds the H_ij cells."""

    h: np.ndarray
    best_cell: tuple[int, int]
    _e: np.ndarray = field(repr=False)
    _f: np.ndarray = field(repr=False)

    @property
    def rows(self) -> int:
        return self.h.shape[0]

    @property
    def cols(self) -> int:
        return self.h.shape[1]

    @property
    def best_score(self) -> int:
        return int(self.h[self.best_cell])


@dataclass(frozen=True)
class PairAlignment:
    """Two equal-length gap-bearing rows plus score and covered spans."""

    aligned_a: str
    aligned_b: str
    score: int
    span_a: tuple[int, int]
    span_b: tuple[int, int]
    mode: str  # "local" | "global"
    a_id: str | None = None
    b_id: str | None = None

    def __post_init__(self):
        assert len(self.aligned_a) == len(self.aligned_b)


def check_score_bound(n: int, m: int, scheme: ScoreScheme) -> None:
    worst = scheme.max_abs_score * max(n, m) + scheme.gap_open + scheme.gap_extend * (n + m)
    if worst >= _SCORE_LIMIT:
        raise SequenceTooLong(
            f"worst-case score magnitude {worst} exceeds the 32-bit budget"
        )


def _require_same_alphabet(a: Sequence, b: Sequence, scheme: ScoreScheme) -> None:
    if a.alphabet.kind != b.alphabet.kind:
        raise AlphabetMismatch(f"{a.alphabet.kind} vs {b.alphabet.kind}")
    if a.alphabet.kind != scheme.alphabet.kind:
        raise AlphabetMismatch(
            f"sequences are {a.alphabet.kind} but scheme is {scheme.alphabet.kind}"
        )


def sw_fill(a: Sequence, b: Sequence, scheme: ScoreScheme) -> DpMatrix:
    """Fill the local-alignment matrix for (a, b) under the scheme.

    Row 0 and column 0 are zero, every cell is floored at zero, and
    best_cell is the lexicographically smallest cell attaining the
    maximum.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("local alignment needs two non-empty sequences")
    _require_same_alphabet(a, b, scheme)
    check_score_bound(len(a), len(b), scheme)
    ea = scheme.alphabet.encode(a.residues)
    eb = scheme.alphabet.encode(b.residues)
    h, e, f, bi, bj = sw_fill_kernel(
        ea, eb, scheme.matrix, scheme.gap_open, scheme.gap_extend
    )
    return DpMatrix(h=h, best_cell=(int(bi), int(bj)), _e=e, _f=f)


def sw_traceback(m: DpMatrix, a: Sequence, b: Sequence, scheme: ScoreScheme) -> PairAlignment:
    """Trace the local alignment back from best_cell to the first zero cell."""
    ea = scheme.alphabet.encode(a.residues)
    eb = scheme.alphabet.encode(b.residues)
    h, e, f = m.h, m._e, m._f
    i, j = m.best_cell
    score = int(h[i, j])
    if score == 0:
        return PairAlignment("", "", 0, (0, 0), (0, 0), "local",
                             a_id=a.id, b_id=b.id)
    ra: list[str] = []
    rb: list[str] = []
    end_i, end_j = i, j
    state = "H"
    # borders are zero, so i, j stay >= 1 while the walk continues
    while h[i, j] != 0 or state != "H":
        if state == "H":
            diag = h[i - 1, j - 1] + scheme.matrix[ea[i - 1], eb[j - 1]]
            if h[i, j] == diag:
                ra.append(a.residues[i - 1])
                rb.append(b.residues[j - 1])
                i -= 1
                j -= 1
            elif h[i, j] == f[i, j]:
                state = "F"
            else:
                state = "E"
        elif state == "F":
            ra.append(a.residues[i - 1])
            rb.append(GAP)
            closing = f[i, j] == h[i - 1, j] - scheme.gap_open
            i -= 1
            if closing:
                state = "H"
        else:
            ra.append(GAP)
            rb.append(b.residues[j - 1])
            closing = e[i, j] == h[i, j - 1] - scheme.gap_open
            j -= 1
            if closing:
                state = "H"
    return PairAlignment(
        "".join(reversed(ra)),
        "".join(reversed(rb)),
        score,
        (i, end_i),
        (j, end_j),
        "local",
        a_id=a.id,
        b_id=b.id,
    )


def ops_to_rows(ops: np.ndarray, a: str, b: str) -> tuple[str, str]:
    """Render op codes against the raw residue strings."""
    ra: list[str] = []
    rb: list[str] = []
    i = 0
    j = 0
    for op in ops:
        if op == 0:
            ra.append(a[i])
            rb.append(b[j])
            i += 1
            j += 1
        elif op == 1:
            ra.append(a[i])
            rb.append(GAP)
            i += 1
        else:
            ra.append(GAP)
            rb.append(b[j])
            j += 1
    return "".join(ra), "".join(rb)


def global_align(a, b, scheme: ScoreScheme) -> PairAlignment:
    """Optimal global alignment of two residue segments (either may be empty).

    Accepts Sequence values or plain strings over the scheme's alphabet.
    """
    a_id = b_id = None
    if isinstance(a, Sequence) and isinstance(b, Sequence):
        _require_same_alphabet(a, b, scheme)
        a_id, b_id = a.id, b.id
    sa = a.residues if isinstance(a, Sequence) else a
    sb = b.residues if isinstance(b, Sequence) else b
    check_score_bound(len(sa), len(sb), scheme)
    ea = scheme.alphabet.encode(sa)
    eb = scheme.alphabet.encode(sb)
    score, ops = nw_align_kernel(ea, eb, scheme.matrix, scheme.gap_open, scheme.gap_extend)
    ra, rb = ops_to_rows(ops, sa, sb)
    return PairAlignment(
        ra, rb, int(score), (0, len(sa)), (0, len(sb)), "global",
        a_id=a_id, b_id=b_id,
    )
