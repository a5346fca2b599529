"""FASTA parsing and writing, alphabet detection, dataset statistics.

Sequences are stored as uppercase strings; gap characters are rejected on
ingest unless the caller asks for the gap-tolerant mode used to re-read
aligned output.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyDataset,
    EmptyFile,
    EmptyRecord,
    IllegalResidue,
    IoFailure,
    MalformedHeader,
)

GAP = "-"
GZIP_MAGIC = b"\x1f\x8b"

_DNA_CANON = "ACGT"
_RNA_CANON = "ACGU"
_PROT_CANON = "ARNDCQEGHILKMFPSTWYV"

# IUPAC ambiguity codes accepted only under the permissive flag; they encode
# to the wildcard slot and score as mismatches everywhere.
_DNA_AMBIG = "RYSWKMBDHV"
_RNA_AMBIG = "RYSWKMBDHV"
_PROT_AMBIG = "BZJUO"

_NUCLEOTIDE_PLAIN = set("ACGTUN")


@dataclass(frozen=True)
class Alphabet:
    """A residue alphabet: canonical letters plus one wildcard slot."""

    kind: str  # "dna" | "rna" | "protein"
    allows_ambiguity: bool = False

    @property
    def canonical(self) -> str:
        return {"dna": _DNA_CANON, "rna": _RNA_CANON, "protein": _PROT_CANON}[self.kind]

    @property
    def wildcard(self) -> str:
        return "X" if self.kind == "protein" else "N"

    @property
    def ambiguity_letters(self) -> str:
        return {"dna": _DNA_AMBIG, "rna": _RNA_AMBIG, "protein": _PROT_AMBIG}[self.kind]

    @property
    def size(self) -> int:
        # canonical letters + wildcard
        return len(self.canonical) + 1

    @property
    def n_canonical(self) -> int:
        return len(self.canonical)

    def legal_letters(self) -> str:
        letters = self.canonical + self.wildcard
        if self.allows_ambiguity:
            letters += self.ambiguity_letters
        return letters

    def encode_table(self) -> np.ndarray:
        """256-entry lookup table: byte -> residue code, 255 for illegal."""
        table = np.full(256, 255, dtype=np.uint8)
        for i, ch in enumerate(self.canonical):
            table[ord(ch)] = i
        wild = len(self.canonical)
        table[ord(self.wildcard)] = wild
        if self.allows_ambiguity:
            for ch in self.ambiguity_letters:
                table[ord(ch)] = wild
        return table

    def encode(self, residues: str) -> np.ndarray:
        """Encode residues to uint8 codes (wildcards share one code)."""
        raw = np.frombuffer(residues.encode("ascii"), dtype=np.uint8)
        codes = self.encode_table()[raw]
        if (codes == 255).any():
            bad = int(np.argmax(codes == 255))
            raise IllegalResidue(
                f"illegal residue {residues[bad]!r} at offset {bad} for alphabet {self.kind}",
                offset=bad,
            )
        return codes


DNA = Alphabet("dna")
RNA = Alphabet("rna")
PROTEIN = Alphabet("protein")


@dataclass(frozen=True)
class Sequence:
    """One input sequence; ``index`` is its zero-based position in the file."""

    id: str
    residues: str
    index: int
    alphabet: Alphabet

    def __len__(self) -> int:
        return len(self.residues)

    def encoded(self) -> np.ndarray:
        return self.alphabet.encode(self.residues)


@dataclass(frozen=True)
class DatasetStats:
    count: int
    min_len: int
    max_len: int
    avg_len: float
    total_bytes: int


def detect_alphabet(residues: str, permissive: bool = False) -> Alphabet:
    """Detect the alphabet of a record.

    Presence of U implies RNA; any letter outside {A,C,G,T,U,N} implies
    protein; otherwise DNA.
    """
    seen = set(residues)
    seen.discard(GAP)
    if seen - _NUCLEOTIDE_PLAIN:
        return Alphabet("protein", permissive)
    if "U" in seen:
        return Alphabet("rna", permissive)
    return Alphabet("dna", permissive)


def _decompress_if_gzip(data: bytes) -> bytes:
    if data[:2] == GZIP_MAGIC:
        return gzip.decompress(data)
    return data


def parse_fasta(
    data,
    alphabet_hint: Alphabet | None = None,
    permissive: bool = False,
    allow_gaps: bool = False,
) -> list[Sequence]:
    """Parse FASTA bytes (or a binary stream) into a list of Sequence.

    The alphabet is detected from the first record when no hint is given;
    a residue in a later record that conflicts with the detected alphabet
    is an IllegalResidue error, never a silent re-detection. Gzip input is
    recognised by its magic bytes.
    """
    if hasattr(data, "read"):
        data = data.read()
    if isinstance(data, str):
        data = data.encode("ascii")
    data = _decompress_if_gzip(data)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise IllegalResidue(f"non-ASCII byte in input: {exc}") from exc

    records: list[tuple[str, str]] = []
    header: str | None = None
    body: list[str] = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            if header is not None:
                records.append((header, "".join(body)))
            header = line[1:].strip()
            if not header:
                raise MalformedHeader("empty FASTA header ('>' with no label)")
            body = []
        else:
            if header is None:
                raise MalformedHeader(f"sequence data before any '>' header: {line[:40]!r}")
            body.append(line.upper())
    if header is not None:
        records.append((header, "".join(body)))

    if not records:
        raise EmptyFile("no FASTA records found")

    for rid, residues in records:
        if not residues:
            raise EmptyRecord(f"record {rid!r} has no residues")

    if alphabet_hint is not None:
        alphabet = Alphabet(alphabet_hint.kind, permissive or alphabet_hint.allows_ambiguity)
    else:
        alphabet = detect_alphabet(records[0][1], permissive)

    legal = set(alphabet.legal_letters())
    if allow_gaps:
        legal.add(GAP)
    seqs = []
    for idx, (rid, residues) in enumerate(records):
        for off, ch in enumerate(residues):
            if ch not in legal:
                raise IllegalResidue(
                    f"record {rid!r}: illegal residue {ch!r} at offset {off} "
                    f"for alphabet {alphabet.kind}",
                    record_id=rid,
                    offset=off,
                )
        seqs.append(Sequence(rid, residues, idx, alphabet))
    return seqs


def read_fasta(path, **kwargs) -> list[Sequence]:
    """Read a FASTA file (optionally gzip-compressed) from disk."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_fasta(data, **kwargs)


def dataset_stats(seqs: list[Sequence]) -> DatasetStats:
    """Count / min / max / mean lengths and total residue bytes."""
    if not seqs:
        raise EmptyDataset("dataset_stats needs at least one sequence")
    lens = [len(s) for s in seqs]
    total = sum(lens)
    return DatasetStats(
        count=len(seqs),
        min_len=min(lens),
        max_len=max(lens),
        avg_len=total / len(seqs),
        total_bytes=total,
    )


def write_fasta(msa, sink) -> None:
    """Write an Msa as FASTA, bodies wrapped at 80 columns, rows in order."""
    if not msa.rows:
        raise EmptyDataset("refusing to write an empty alignment")
    own = False
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        try:
            sink = open(sink, "w")
        except OSError as exc:
            raise IoFailure(f"cannot open {sink} for writing: {exc}") from exc
        own = True
    try:
        for rid, row in msa.rows:
            sink.write(f">{rid}\n")
            for i in range(0, len(row), 80):
                sink.write(row[i : i + 80])
                sink.write("\n")
    except OSError as exc:
        raise IoFailure(f"write failed: {exc}") from exc
    finally:
        if own:
            sink.close()


def format_stats(stats: DatasetStats) -> str:
    """Render stats as key=value lines; mean length to one decimal."""
    return "\n".join(
        [
            f"count={stats.count}",
            f"min_len={stats.min_len}",
            f"max_len={stats.max_len}",
            f"avg_len={stats.avg_len:.1f}",
            f"total_bytes={stats.total_bytes}",
        ]
    )
