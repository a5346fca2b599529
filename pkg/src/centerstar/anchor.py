"""K-mer keyword tree over the center sequence and co-linear anchor chaining.

The trie indexes only the center sequence; it is immutable after build and
is shared read-only by every worker (the in-process stand-in for a
broadcast variable). Queries stream through it in a single failure-link
pass. K-mers containing wildcard residues are neither indexed nor matched,
so anchors consist of canonical residues only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlphabetMismatch, KTooLarge, KTooSmall
from .kernels import (
    ac_match_kernel,
    chain_blocks_kernel,
    merge_hits_kernel,
    trie_build_kernel,
)
from .seqio import Alphabet, Sequence

DEFAULT_KMER_NUCLEOTIDE = 15
DEFAULT_KMER_PROTEIN = 3


def default_kmer(alphabet: Alphabet) -> int:
    return DEFAULT_KMER_PROTEIN if alphabet.kind == "protein" else DEFAULT_KMER_NUCLEOTIDE


@dataclass
class KmerTrie:
    """Keyword tree with failure links over the distinct k-mers of the center."""

    k: int
    alphabet: Alphabet
    center_len: int
    children: np.ndarray = field(repr=False)  # int32 (n_nodes, n_canonical)
    fail: np.ndarray = field(repr=False)
    term_start: np.ndarray = field(repr=False)
    term_off: np.ndarray = field(repr=False)
    n_nodes: int = 0

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(np.diff(self.term_start)))

    def occurrences(self, kmer: str) -> list[int]:
        """Sorted center offsets of one k-mer, empty if absent."""
        if len(kmer) != self.k:
            return []
        codes = self.alphabet.encode(kmer)
        node = 0
        for sym in codes:
            if sym >= self.alphabet.n_canonical:
                return []
            node = int(self.children[node, sym])
            if node < 0:
                return []
        a, b = int(self.term_start[node]), int(self.term_start[node + 1])
        return [int(x) for x in self.term_off[a:b]]


@dataclass(frozen=True)
class AnchorChain:
    """Co-linear, non-overlapping exact-match blocks (center_start,
    query_start, length) plus the implied unmatched regions."""

    anchors: tuple[tuple[int, int, int], ...]
    center_len: int
    query_len: int

    @property
    def gaps(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """Inter-anchor regions as ((c0, c1), (q0, q1)), ends included."""
        out = []
        pc = pq = 0
        for c, q, ln in self.anchors:
            if c > pc or q > pq:
                out.append(((pc, c), (pq, q)))
            pc, pq = c + ln, q + ln
        if pc < self.center_len or pq < self.query_len:
            out.append(((pc, self.center_len), (pq, self.query_len)))
        return out

    @property
    def anchored_residues(self) -> int:
        return sum(ln for _c, _q, ln in self.anchors)


def build_trie(center: Sequence, k: int) -> KmerTrie:
    """Index every distinct k-mer of the center with its occurrence offsets."""
    if k < 1:
        raise KTooSmall(f"k must be >= 1, got {k}")
    if k > len(center):
        raise KTooLarge(f"k={k} exceeds center length {len(center)}")
    enc = center.encoded()
    children, fail, term_start, term_off, n_nodes = trie_build_kernel(
        enc, k, center.alphabet.n_canonical
    )
    return KmerTrie(
        k=k,
        alphabet=center.alphabet,
        center_len=len(center),
        children=children,
        fail=fail,
        term_start=term_start,
        term_off=term_off,
        n_nodes=int(n_nodes),
    )


def match_stream(trie: KmerTrie, query: Sequence,
                 with_stats: bool = False):
    """All (center_start, query_start, k) k-mer matches, single pass.

    With ``with_stats`` also returns the automaton transition count, which
    is bounded by 2 * len(query).
    """
    if query.alphabet.kind != trie.alphabet.kind:
        raise AlphabetMismatch(
            f"query is {query.alphabet.kind} but trie is {trie.alphabet.kind}"
        )
    enc = query.encoded()
    cs, qs, n, transitions = ac_match_kernel(
        trie.children, trie.fail, trie.term_start, trie.term_off,
        enc, trie.k, trie.alphabet.n_canonical,
    )
    hits = [(int(cs[i]), int(qs[i]), trie.k) for i in range(n)]
    if with_stats:
        return hits, int(transitions)
    return hits


def chain_anchors(hits, center_len: int, query_len: int) -> AnchorChain:
    """Merge diagonal-adjacent hits into maximal blocks, then keep the
    co-linear chain of maximum total anchored length.

    Blocks that overlap their predecessor (micro-homology around indels)
    join the chain with their head trimmed by the overlap, so the returned
    anchors never overlap on either sequence and each keeps length >= k.
    Ties resolve toward smaller center_start.
    """
    if not hits:
        return AnchorChain((), center_len, query_len)
    k = hits[0][2]
    ordered = sorted(hits, key=lambda h: (h[1], h[0]))
    cs = np.array([h[0] for h in ordered], dtype=np.int64)
    qs = np.array([h[1] for h in ordered], dtype=np.int64)
    bc, bq, bl, nb = merge_hits_kernel(cs, qs, len(ordered), k, center_len, query_len)
    ac, aq, al, ns = chain_blocks_kernel(bc, bq, bl, nb, k)
    anchors = tuple((int(ac[i]), int(aq[i]), int(al[i])) for i in range(ns))
    return AnchorChain(anchors, center_len, query_len)
