import gzip
import io

import pytest

from centerstar.errors import (
    EmptyDataset,
    EmptyFile,
    EmptyRecord,
    IllegalResidue,
    MalformedHeader,
)
from centerstar.msa import msa_from_rows
from centerstar.seqio import (
    DNA,
    Alphabet,
    Sequence,
    dataset_stats,
    detect_alphabet,
    format_stats,
    parse_fasta,
    write_fasta,
)


def test_single_record_dna():
    seqs = parse_fasta(b">s1\nACGT\n")
    assert len(seqs) == 1
    assert seqs[0].id == "s1"
    assert seqs[0].residues == "ACGT"
    assert seqs[0].index == 0
    assert seqs[0].alphabet.kind == "dna"


def test_multiline_protein_concatenation():
    seqs = parse_fasta(b">p\nMKV\nLIT\n")
    assert seqs[0].residues == "MKVLIT"
    assert seqs[0].alphabet.kind == "protein"


def test_gap_rejected_with_offset():
    with pytest.raises(IllegalResidue) as err:
        parse_fasta(b">x\nAC-GT\n")
    assert err.value.offset == 2
    assert err.value.record_id == "x"


def test_gap_allowed_in_tolerant_mode():
    seqs = parse_fasta(b">x\nAC-GT\n", allow_gaps=True)
    assert seqs[0].residues == "AC-GT"


def test_lowercase_normalized():
    seqs = parse_fasta(b">s\nacgt\n")
    assert seqs[0].residues == "ACGT"


def test_rna_detection_via_u():
    assert parse_fasta(b">r\nACGU\n")[0].alphabet.kind == "rna"
    assert detect_alphabet("ACGU").kind == "rna"


def test_detection_is_fixed_by_first_record():
    # second record's U conflicts with the detected DNA alphabet: an error,
    # never a silent re-detection
    with pytest.raises(IllegalResidue):
        parse_fasta(b">a\nACGT\n>b\nACGU\n")


def test_alphabet_hint_overrides_detection():
    seqs = parse_fasta(b">a\nACGT\n", alphabet_hint=Alphabet("protein"))
    assert seqs[0].alphabet.kind == "protein"


def test_malformed_header_body_first():
    with pytest.raises(MalformedHeader):
        parse_fasta(b"ACGT\n>s\nACGT\n")


def test_empty_header_rejected():
    with pytest.raises(MalformedHeader):
        parse_fasta(b">\nACGT\n")


def test_empty_file():
    with pytest.raises(EmptyFile):
        parse_fasta(b"")
    with pytest.raises(EmptyFile):
        parse_fasta(b"\n\n")


def test_empty_record():
    with pytest.raises(EmptyRecord):
        parse_fasta(b">a\n>b\nACGT\n")


def test_ambiguity_codes_need_permissive_flag():
    with pytest.raises(IllegalResidue):
        parse_fasta(b">a\nACGR\n", alphabet_hint=DNA)
    seqs = parse_fasta(b">a\nACGR\n", alphabet_hint=DNA, permissive=True)
    assert seqs[0].residues == "ACGR"
    # permissive ambiguity letters encode to the wildcard slot
    assert seqs[0].encoded()[3] == 4


def test_gzip_magic_detected():
    data = gzip.compress(b">s\nACGT\n")
    seqs = parse_fasta(data)
    assert seqs[0].residues == "ACGT"


def test_non_ascii_rejected():
    with pytest.raises(IllegalResidue):
        parse_fasta(">s\nACG\xc3\x9f\n".encode("latin-1"))


def test_dataset_stats_examples():
    one = [Sequence("a", "ACGT", 0, DNA)]
    st = dataset_stats(one)
    assert (st.count, st.min_len, st.max_len, st.avg_len, st.total_bytes) == (1, 4, 4, 4.0, 4)

    mixed = [
        Sequence("a", "AC", 0, DNA),
        Sequence("b", "ACGT", 1, DNA),
        Sequence("c", "ACGTAC", 2, DNA),
    ]
    st = dataset_stats(mixed)
    assert (st.count, st.min_len, st.max_len, st.avg_len, st.total_bytes) == (3, 2, 6, 4.0, 12)


def test_dataset_stats_empty():
    with pytest.raises(EmptyDataset):
        dataset_stats([])


def test_dataset_stats_copies_scale_count_not_lengths():
    seqs = parse_fasta(b">a\nACGT\n>b\nACGTAAGG\n")
    st1 = dataset_stats(seqs)
    k = 5
    copies = []
    for rep in range(k):
        for s in seqs:
            copies.append(Sequence(s.id, s.residues, len(copies), s.alphabet))
    stk = dataset_stats(copies)
    assert stk.count == k * st1.count
    assert stk.total_bytes == k * st1.total_bytes
    assert (stk.min_len, stk.max_len, stk.avg_len) == (st1.min_len, st1.max_len, st1.avg_len)


def test_write_fasta_wraps_and_round_trips():
    rows = [("id1", "AC-G" * 50), ("id2", "ACTG" * 50)]
    msa = msa_from_rows(rows)
    buf = io.StringIO()
    write_fasta(msa, buf)
    text = buf.getvalue()
    assert max(len(line) for line in text.splitlines()) <= 80
    reparsed = parse_fasta(text.encode(), allow_gaps=True)
    assert [(s.id, s.residues) for s in reparsed] == rows


def test_write_fasta_empty_rejected():
    from centerstar.msa import Msa

    with pytest.raises(EmptyDataset):
        write_fasta(Msa(rows=[], n_cols=0), io.StringIO())


def test_write_order_is_input_order():
    rows = [("z", "AC"), ("a", "GT"), ("m", "CC")]
    buf = io.StringIO()
    write_fasta(msa_from_rows(rows), buf)
    ids = [l[1:] for l in buf.getvalue().splitlines() if l.startswith(">")]
    assert ids == ["z", "a", "m"]


def test_format_stats_one_decimal():
    st = dataset_stats(parse_fasta(b">a\nACG\n>b\nACGT\n"))
    text = format_stats(st)
    assert "avg_len=3.5" in text
    assert "count=2" in text
