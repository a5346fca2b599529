import numpy as np
import pytest

from oracles import (
    global_align_oracle,
    local_score_enum,
    local_score_naive,
    random_seq,
)

from centerstar.errors import AlphabetMismatch, EmptyInput, SequenceTooLong
from centerstar.pairwise import (
    DpMatrix,
    ScoreScheme,
    check_score_bound,
    default_scheme,
    global_align,
    sw_fill,
    sw_traceback,
)
from centerstar.seqio import DNA, PROTEIN, RNA, Sequence


def seq(s, idx=0, alpha=DNA):
    return Sequence(f"s{idx}", s, idx, alpha)


def scheme(match=1, mismatch=-1, go=2, ge=1):
    return ScoreScheme.nucleotide(match=match, mismatch=mismatch,
                                  gap_open=go, gap_extend=ge)


class TestScoreScheme:
    def test_gap_family(self):
        sc = scheme(go=2, ge=1)
        assert [sc.w(k) for k in range(5)] == [0, 2, 3, 4, 5]
        # linear scheme: open == extend
        lin = scheme(go=2, ge=2)
        assert [lin.w(k) for k in range(1, 4)] == [2, 4, 6]

    def test_w1_must_be_positive(self):
        with pytest.raises(ValueError):
            scheme(go=0)

    def test_extend_nonnegative(self):
        with pytest.raises(ValueError):
            scheme(ge=-1)

    def test_builtin_diagonals_positive(self):
        for sc in (scheme(), ScoreScheme.blosum62(),
                   ScoreScheme.nucleotide(alphabet=RNA)):
            diag = np.diagonal(sc.matrix)[: sc.alphabet.n_canonical]
            assert (diag > 0).all()

    def test_wildcard_is_mismatch_everywhere(self):
        sc = scheme(mismatch=-2)
        wild = sc.alphabet.n_canonical
        assert (sc.matrix[wild, :] == -2).all()
        assert (sc.matrix[:, wild] == -2).all()
        blo = ScoreScheme.blosum62()
        xi = blo.alphabet.n_canonical
        assert (blo.matrix[xi, :] == -1).all()

    def test_blosum62_spot_values(self):
        blo = ScoreScheme.blosum62()
        assert blo.score("W", "W") == 11
        assert blo.score("C", "C") == 9
        assert blo.score("A", "A") == 4
        assert blo.score("W", "A") == -3
        assert blo.score("E", "Q") == 2
        assert blo.gap_open == 11 and blo.gap_extend == 1

    def test_default_scheme_by_alphabet(self):
        assert default_scheme(DNA).name.startswith("match")
        assert default_scheme(PROTEIN).name == "BLOSUM62"


class TestSwFill:
    def test_identical_sequences(self):
        m = sw_fill(seq("ACGT"), seq("ACGT", 1), scheme(go=1, ge=1))
        assert m.best_score == 4
        assert m.best_cell == (4, 4)

    def test_all_nonpositive_scores_zero_matrix(self):
        # custom raw scheme: every substitution <= 0 forces the zero floor
        asz = DNA.size
        mat = np.full((asz, asz), -1, dtype=np.int32)
        sc = ScoreScheme(DNA, mat, gap_open=2, gap_extend=1)
        m = sw_fill(seq("ACGT"), seq("TTAA", 1), sc)
        assert m.h.max() == 0
        assert m.best_cell == (0, 0)

    def test_classic_instance_score_13(self):
        sc = scheme(match=3, mismatch=-3, go=2, ge=2)
        m = sw_fill(seq("TGTTACGG"), seq("GGTTGACTA", 1), sc)
        assert m.best_score == 13
        assert m.best_score == local_score_naive("TGTTACGG", "GGTTGACTA", 3, -3, 2, 2)

    def test_borders_zero_and_floor(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            a = random_seq(rng, int(rng.integers(1, 9)))
            b = random_seq(rng, int(rng.integers(1, 9)))
            m = sw_fill(seq(a), seq(b, 1), scheme())
            assert (m.h[0, :] == 0).all()
            assert (m.h[:, 0] == 0).all()
            assert m.h.min() >= 0

    def test_score_symmetry(self):
        rng = np.random.default_rng(1)
        sc = scheme(match=2, mismatch=-3, go=3, ge=1)
        for _ in range(30):
            a = random_seq(rng, int(rng.integers(1, 10)))
            b = random_seq(rng, int(rng.integers(1, 10)))
            m1 = sw_fill(seq(a), seq(b, 1), sc)
            m2 = sw_fill(seq(b), seq(a, 1), sc)
            assert m1.best_score == m2.best_score

    def test_affine_equals_linear_oracle_when_open_eq_extend(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            g = int(rng.integers(1, 4))
            a = random_seq(rng, int(rng.integers(1, 8)))
            b = random_seq(rng, int(rng.integers(1, 8)))
            m = sw_fill(seq(a), seq(b, 1), scheme(go=g, ge=g))
            # independent linear-gap DP: W_k = g*k
            n, mm = len(a), len(b)
            h = [[0] * (mm + 1) for _ in range(n + 1)]
            best = 0
            for i in range(1, n + 1):
                for j in range(1, mm + 1):
                    sub = 1 if a[i - 1] == b[j - 1] else -1
                    h[i][j] = max(0, h[i - 1][j - 1] + sub,
                                  h[i - 1][j] - g, h[i][j - 1] - g)
                    best = max(best, h[i][j])
            assert m.best_score == best

    def test_oracle_equivalence_small(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            a = random_seq(rng, int(rng.integers(1, 9)))
            b = random_seq(rng, int(rng.integers(1, 9)))
            match = int(rng.integers(1, 5))
            mis = -int(rng.integers(1, 5))
            go = int(rng.integers(1, 5))
            ge = int(rng.integers(0, 4))
            m = sw_fill(seq(a), seq(b, 1), scheme(match, mis, go, ge))
            assert m.best_score == local_score_naive(a, b, match, mis, go, ge)

    def test_enum_oracle_agrees_with_naive_dp(self):
        rng = np.random.default_rng(4)
        for _ in range(8):
            a = random_seq(rng, int(rng.integers(1, 5)))
            b = random_seq(rng, int(rng.integers(1, 5)))
            assert local_score_enum(a, b, 2, -3, 2, 1) == \
                local_score_naive(a, b, 2, -3, 2, 1)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            sw_fill(Sequence("e", "", 0, DNA), seq("ACGT", 1), scheme())

    def test_alphabet_mismatch(self):
        with pytest.raises(AlphabetMismatch):
            sw_fill(seq("ACGT"), Sequence("r", "ACGU", 1, RNA), scheme())

    def test_best_cell_lexicographically_smallest(self):
        m = sw_fill(seq("AA"), seq("A", 1), scheme())
        assert m.best_cell == (1, 1)


class TestSwTraceback:
    def test_classic_alignment(self):
        sc = scheme(match=3, mismatch=-3, go=2, ge=2)
        a, b = seq("TGTTACGG"), seq("GGTTGACTA", 1)
        aln = sw_traceback(sw_fill(a, b, sc), a, b, sc)
        assert (aln.aligned_a, aln.aligned_b, aln.score) == ("GTT-AC", "GTTGAC", 13)
        assert aln.mode == "local"

    def test_zero_matrix_empty_alignment(self):
        asz = DNA.size
        mat = np.full((asz, asz), -1, dtype=np.int32)
        sc = ScoreScheme(DNA, mat, gap_open=2, gap_extend=1)
        a, b = seq("ACGT"), seq("TTAA", 1)
        aln = sw_traceback(sw_fill(a, b, sc), a, b, sc)
        assert aln.aligned_a == "" and aln.aligned_b == ""
        assert aln.score == 0
        assert aln.span_a == (0, 0) and aln.span_b == (0, 0)

    def test_identical_inputs(self):
        sc = scheme()
        a, b = seq("ACGT"), seq("ACGT", 1)
        aln = sw_traceback(sw_fill(a, b, sc), a, b, sc)
        assert (aln.aligned_a, aln.aligned_b, aln.score) == ("ACGT", "ACGT", 4)

    def test_gap_free_recovery(self):
        rng = np.random.default_rng(5)
        sc = scheme(match=2, mismatch=-1, go=2, ge=1)
        for _ in range(40):
            a = seq(random_seq(rng, int(rng.integers(2, 12))))
            b = seq(random_seq(rng, int(rng.integers(2, 12))), 1)
            aln = sw_traceback(sw_fill(a, b, sc), a, b, sc)
            assert aln.aligned_a.replace("-", "") == a.residues[aln.span_a[0]:aln.span_a[1]]
            assert aln.aligned_b.replace("-", "") == b.residues[aln.span_b[0]:aln.span_b[1]]
            for x, y in zip(aln.aligned_a, aln.aligned_b):
                assert not (x == "-" and y == "-")


class TestGlobalAlign:
    def test_empty_vs_sequence(self):
        sc = scheme()
        aln = global_align("", "ACG", sc)
        assert (aln.aligned_a, aln.aligned_b) == ("---", "ACG")
        assert aln.score == -sc.w(3)

    def test_both_empty(self):
        aln = global_align("", "", scheme())
        assert aln.aligned_a == "" and aln.score == 0

    def test_identical(self):
        aln = global_align("AC", "AC", scheme())
        assert (aln.aligned_a, aln.aligned_b, aln.score) == ("AC", "AC", 2)

    def test_derived_deletion_example(self):
        aln = global_align("ACGT", "AGT", scheme(go=1, ge=1))
        assert (aln.aligned_a, aln.aligned_b, aln.score) == ("ACGT", "A-GT", 2)

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(6)
        for _ in range(80):
            a = random_seq(rng, int(rng.integers(0, 12)))
            b = random_seq(rng, int(rng.integers(0, 12)))
            match = int(rng.integers(1, 4))
            mis = -int(rng.integers(1, 4))
            go = int(rng.integers(1, 4))
            ge = int(rng.integers(0, 3))
            got = global_align(a, b, scheme(match, mis, go, ge))
            want = global_align_oracle(a, b, match, mis, go, ge)
            assert (got.aligned_a, got.aligned_b, got.score) == want

    def test_sequence_too_long_guard(self):
        with pytest.raises(SequenceTooLong):
            check_score_bound(2**28, 2**28, scheme())

    def test_alphabet_mismatch(self):
        with pytest.raises(AlphabetMismatch):
            global_align(seq("ACGT"), Sequence("r", "ACGU", 1, RNA), scheme())
