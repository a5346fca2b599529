"""Center-star multiple alignment pipeline.

Two map/reduce stages: (1) align every other sequence to the shared
center and record the gap runs each pairwise alignment inserts into the
center; the reduce keeps the per-offset maximum run ("once a gap, always
a gap"). (2) render each row against the merged center gaps. Within one
inter-gap region a row's own inserted residues come first and the padding
gaps follow; this left-justified convention is part of the output
contract and is shared with the reference oracle in the test suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .anchor import build_trie, default_kmer, match_stream
from .engine import MemorySampler, RunConfig, RunReport, par_map_reduce
from .errors import (
    AlphabetMismatch,
    DataError,
    InconsistentCenter,
    LengthMismatch,
    TooFewSequences,
)
from .kernels import align_chunk_kernel, align_query_kernel
from .pairwise import (
    PairAlignment,
    ScoreScheme,
    check_score_bound,
    default_scheme,
)
from .seqio import GAP, Alphabet, Sequence

DEFAULT_ANCHOR_MARGIN = 16


@dataclass(frozen=True)
class MsaConfig:
    center_mode: str | None = None  # "first" | "sampled"; None = by alphabet
    kmer: int | None = None
    threads: int = 0
    chunk_size: int | None = None
    seed: int = 0
    anchor_margin: int = DEFAULT_ANCHOR_MARGIN

    def resolved_center_mode(self, alphabet: Alphabet) -> str:
        if self.center_mode is not None:
            return self.center_mode
        return "sampled" if alphabet.kind == "protein" else "first"

    def resolved_kmer(self, alphabet: Alphabet) -> int:
        return self.kmer if self.kmer is not None else default_kmer(alphabet)


@dataclass
class Msa:
    """Column-aligned rows in input order."""

    rows: list[tuple[str, str]]
    n_cols: int
    alphabet: Alphabet | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def ids(self) -> list[str]:
        return [rid for rid, _row in self.rows]

    def row_strings(self) -> list[str]:
        return [row for _rid, row in self.rows]

    def validate(self, originals: list[str] | None = None) -> None:
        gap = ord(GAP)
        all_gap = np.ones(self.n_cols, dtype=bool) if self.n_cols else None
        for i, (rid, row) in enumerate(self.rows):
            if len(row) != self.n_cols:
                raise DataError(f"row {rid!r} has {len(row)} columns, expected {self.n_cols}")
            arr = np.frombuffer(row.encode("ascii"), dtype=np.uint8)
            if all_gap is not None and all_gap.any():
                all_gap &= arr == gap
            if originals is not None:
                res = np.frombuffer(originals[i].encode("ascii"), dtype=np.uint8)
                kept = arr[arr != gap]
                if kept.shape != res.shape or not (kept == res).all():
                    raise DataError(f"row {rid!r} does not reproduce its input residues")
        if self.rows and all_gap is not None and all_gap.any():
            raise DataError("alignment contains an all-gap column")


@dataclass
class GapLedger:
    """Inserted-space bookkeeping.

    center_gaps: center offset -> maximum gap run inserted before that
    offset over all pairwise alignments (offset == center length means
    trailing). per_seq_gaps: each pair's own center-side run map.
    """

    center_gaps: dict[int, int]
    per_seq_gaps: list[dict[int, int]]

    def extra_columns(self) -> int:
        return sum(self.center_gaps.values())


def msa_from_rows(rows: list[tuple[str, str]], alphabet: Alphabet | None = None) -> Msa:
    if not rows:
        raise DataError("no rows")
    n_cols = len(rows[0][1])
    for rid, row in rows:
        if len(row) != n_cols:
            raise LengthMismatch(
                f"row {rid!r} has length {len(row)}, expected {n_cols}; "
                "is the input really aligned?"
            )
    return Msa(rows=rows, n_cols=n_cols, alphabet=alphabet)


def msa_from_sequences(seqs: list[Sequence]) -> Msa:
    """Treat already-aligned (gap-bearing) sequences as an Msa."""
    return msa_from_rows([(s.id, s.residues) for s in seqs],
                         alphabet=seqs[0].alphabet if seqs else None)


# ---------------------------------------------------------------------------
# run extraction and row rendering


def _runs_from_rows(center_row: str, query_row: str):
    """Recover (ins_runs, del_runs) keyed by center offset from a pair."""
    ins_runs: list[tuple[int, int]] = []
    del_runs: list[tuple[int, int]] = []
    c_off = 0
    i = 0
    n = len(center_row)
    while i < n:
        cg = center_row[i] == GAP
        qg = query_row[i] == GAP
        if cg and qg:
            raise DataError("column with gaps in both rows of a pairwise alignment")
        if cg:
            run = 0
            while i < n and center_row[i] == GAP:
                if query_row[i] == GAP:
                    raise DataError("column with gaps in both rows of a pairwise alignment")
                run += 1
                i += 1
            ins_runs.append((c_off, run))
        elif qg:
            start = c_off
            run = 0
            while i < n and query_row[i] == GAP and center_row[i] != GAP:
                run += 1
                i += 1
                c_off += 1
            del_runs.append((start, run))
        else:
            c_off += 1
            i += 1
    return ins_runs, del_runs


def _render_center_row(center: str, center_gaps: dict[int, int]) -> str:
    pieces = []
    for o in range(len(center) + 1):
        r = center_gaps.get(o, 0)
        if r:
            pieces.append(GAP * r)
        if o < len(center):
            pieces.append(center[o])
    return "".join(pieces)


def _render_query_row(
    query: str,
    ins_runs,
    del_runs,
    center_gaps: dict[int, int],
    center_len: int,
) -> str:
    pieces = []
    qpos = 0
    ii = 0
    di = 0
    del_until = 0
    for o in range(center_len + 1):
        own = 0
        if ii < len(ins_runs) and ins_runs[ii][0] == o:
            own = ins_runs[ii][1]
            pieces.append(query[qpos : qpos + own])
            qpos += own
            ii += 1
        r = center_gaps.get(o, 0)
        if r > own:
            pieces.append(GAP * (r - own))
        if o < center_len:
            if di < len(del_runs) and del_runs[di][0] == o:
                del_until = o + del_runs[di][1]
                di += 1
            if o < del_until:
                pieces.append(GAP)
            else:
                pieces.append(query[qpos])
                qpos += 1
    if qpos != len(query):
        raise DataError("gap runs inconsistent with query length")
    return "".join(pieces)


class _ColumnMap:
    """Precomputed geometry of the merged alignment: for every center
    offset, the global column of its residue and of the gap region before
    it. Shared read-only by all render workers."""

    def __init__(self, center_gaps: dict[int, int], center_len: int):
        L = center_len
        runs = np.zeros(L + 1, dtype=np.int64)
        for off, ln in center_gaps.items():
            runs[off] = ln
        pre = np.cumsum(runs)
        self.center_len = L
        self.runs = runs
        # column of center residue o (o == L maps to n_cols)
        self.res_col = np.arange(L + 1, dtype=np.int64) + pre
        self.n_cols = int(L + pre[L])


def _render_query_row_fast(query: str, ins_runs, del_runs, cmap: _ColumnMap) -> str:
    """Vectorized equivalent of _render_query_row (one scatter per row)."""
    L = cmap.center_len
    qbytes = np.frombuffer(query.encode("ascii"), dtype=np.uint8)
    row = np.full(cmap.n_cols, ord(GAP), dtype=np.uint8)
    matched = np.ones(L, dtype=bool)
    for off, ln in del_runs:
        matched[off : off + ln] = False
    matched_off = np.nonzero(matched)[0]
    io = np.array([o for o, _l in ins_runs], dtype=np.int64)
    il = np.array([l for _o, l in ins_runs], dtype=np.int64)
    ins_cum = np.zeros(len(ins_runs) + 1, dtype=np.int64)
    np.cumsum(il, out=ins_cum[1:])
    if len(matched_off):
        qpos = (
            np.arange(len(matched_off), dtype=np.int64)
            + ins_cum[np.searchsorted(io, matched_off, side="right")]
        )
        row[cmap.res_col[matched_off]] = qbytes[qpos]
    for t in range(len(ins_runs)):
        o = int(io[t])
        ln = int(il[t])
        qstart = int(np.searchsorted(matched_off, o, side="left")) + int(ins_cum[t])
        col0 = int(cmap.res_col[o]) - int(cmap.runs[o])
        row[col0 : col0 + ln] = qbytes[qstart : qstart + ln]
    if int(len(matched_off)) + int(ins_cum[-1]) != len(query):
        raise DataError("gap runs inconsistent with query length")
    return bytes(row).decode("ascii")


def build_gap_ledger(center: Sequence, pairs: list[PairAlignment]) -> GapLedger:
    """Max-merge the center-side gap runs of pairwise alignments."""
    center_gaps: dict[int, int] = {}
    per_seq: list[dict[int, int]] = []
    for pair in pairs:
        if pair.aligned_a.replace(GAP, "") != center.residues:
            raise InconsistentCenter(
                f"pair {pair.b_id!r}: gap-stripped center row differs from the center"
            )
        ins_runs, _del_runs = _runs_from_rows(pair.aligned_a, pair.aligned_b)
        own = dict(ins_runs)
        per_seq.append(own)
        for off, ln in ins_runs:
            if ln > center_gaps.get(off, 0):
                center_gaps[off] = ln
    return GapLedger(center_gaps=center_gaps, per_seq_gaps=per_seq)


def merge_alignments(center: Sequence, pairs: list[PairAlignment]) -> Msa:
    """Merge pairwise alignments against one center into a single Msa.

    Row order: center first, then the pairs in list order. run_msa
    restores original input order itself.
    """
    ledger = build_gap_ledger(center, pairs)
    rows = [(center.id, _render_center_row(center.residues, ledger.center_gaps))]
    for i, pair in enumerate(pairs):
        ins_runs, del_runs = _runs_from_rows(pair.aligned_a, pair.aligned_b)
        query = pair.aligned_b.replace(GAP, "")
        row = _render_query_row(
            query, ins_runs, del_runs, ledger.center_gaps, len(center)
        )
        rows.append((pair.b_id or f"seq{i + 1}", row))
    msa = Msa(rows=rows, n_cols=len(rows[0][1]), alphabet=center.alphabet)
    msa.validate()
    return msa


# ---------------------------------------------------------------------------
# center selection


def select_center(seqs: list[Sequence], mode: str = "first", k: int | None = None) -> int:
    """Pick the center sequence index.

    "first" returns index 0. "sampled" stride-samples ceil(sqrt(n))
    candidates (offset 0), scores each by its k-mer hit count against a
    fixed stride sample of other sequences, and returns the best; ties go
    to the smaller index.
    """
    n = len(seqs)
    if n < 2:
        raise TooFewSequences("need at least 2 sequences")
    if mode == "first":
        return 0
    if mode != "sampled":
        raise ValueError(f"unknown center mode {mode!r}")
    if k is None:
        k = default_kmer(seqs[0].alphabet)
    r = math.isqrt(n)
    s = r if r * r == n else r + 1  # ceil(sqrt(n))
    stride = max(1, n // s)
    candidates = list(range(0, n, stride))[:s]
    others = []
    seen = set()
    for i in range(s):
        o = min(i * stride + stride // 2, n - 1)
        if o not in seen:
            seen.add(o)
            others.append(o)
    best_idx = candidates[0]
    best_hits = -1
    for c in candidates:
        if k > len(seqs[c]):
            hits = 0
        else:
            trie = build_trie(seqs[c], k)
            hits = 0
            for o in others:
                if o == c:
                    continue
                hits += len(match_stream(trie, seqs[o]))
        if hits > best_hits:
            best_hits = hits
            best_idx = c
    return best_idx


# ---------------------------------------------------------------------------
# pairwise against the center


def _trie_arrays(center: Sequence, k: int):
    trie = build_trie(center, k)
    return trie.children, trie.fail, trie.term_start, trie.term_off


def _dummy_trie_arrays():
    return (
        np.full((1, 1), -1, dtype=np.int32),
        np.zeros(1, dtype=np.int32),
        np.zeros(2, dtype=np.int64),
        np.zeros(0, dtype=np.int64),
    )


def align_to_center(
    center: Sequence,
    query: Sequence,
    scheme: ScoreScheme | None = None,
    cfg: MsaConfig = MsaConfig(),
    trie=None,
) -> PairAlignment:
    """Full-length global alignment of one query against the center.

    Nucleotide inputs go through anchor chaining with margin-extended DP
    regions; proteins and queries shorter than k take the full DP. Either
    way the result covers both sequences end to end.
    """
    if center.alphabet.kind != query.alphabet.kind:
        raise AlphabetMismatch(f"{center.alphabet.kind} vs {query.alphabet.kind}")
    if scheme is None:
        scheme = default_scheme(center.alphabet)
    check_score_bound(len(center), len(query), scheme)
    k = cfg.resolved_kmer(center.alphabet)
    use_trie = center.alphabet.kind != "protein" and k <= len(center)
    if use_trie:
        if trie is None:
            children, fail, term_start, term_off = _trie_arrays(center, k)
        else:
            children, fail, term_start, term_off = (
                trie.children, trie.fail, trie.term_start, trie.term_off,
            )
    else:
        children, fail, term_start, term_off = _dummy_trie_arrays()
    ins_off, ins_len, del_off, del_len, score, _cells = align_query_kernel(
        center.encoded(), query.encoded(),
        children, fail, term_start, term_off,
        k, cfg.anchor_margin, scheme.matrix,
        scheme.gap_open, scheme.gap_extend,
        1 if use_trie else 0, center.alphabet.n_canonical,
    )
    ins_runs = [(int(o), int(l)) for o, l in zip(ins_off, ins_len)]
    del_runs = [(int(o), int(l)) for o, l in zip(del_off, del_len)]
    own = dict(ins_runs)
    row_a = _render_center_row(center.residues, own)
    row_b = _render_query_row(query.residues, ins_runs, del_runs, own, len(center))
    return PairAlignment(
        row_a, row_b, int(score), (0, len(center)), (0, len(query)), "global",
        a_id=center.id, b_id=query.id,
    )


# ---------------------------------------------------------------------------
# the pipeline


def run_msa(
    seqs: list[Sequence],
    scheme: ScoreScheme | None = None,
    cfg: MsaConfig = MsaConfig(),
) -> tuple[Msa, RunReport]:
    """Center-star MSA: select center, align all others to it in parallel,
    max-merge the inserted gaps, render rows. Output is byte-identical for
    every thread count."""
    n = len(seqs)
    if n < 2:
        raise TooFewSequences("need at least 2 sequences to align")
    alphabet = seqs[0].alphabet
    for s in seqs[1:]:
        if s.alphabet.kind != alphabet.kind:
            raise AlphabetMismatch(
                f"mixed alphabets in input: {alphabet.kind} vs {s.alphabet.kind}"
            )
    if scheme is None:
        scheme = default_scheme(alphabet)

    run_cfg = RunConfig(threads=cfg.threads, chunk_size=cfg.chunk_size, seed=cfg.seed)
    report = RunReport(threads=run_cfg.resolved_threads())
    with MemorySampler() as sampler:
        msa = _run_msa_stages(seqs, scheme, cfg, run_cfg, report)
    report.baseline_rss = sampler.baseline
    report.peak_rss = sampler.peak
    return msa, report


def _run_msa_stages(
    seqs: list[Sequence],
    scheme: ScoreScheme,
    cfg: MsaConfig,
    run_cfg: RunConfig,
    report: RunReport,
) -> Msa:
    alphabet = seqs[0].alphabet
    t0 = time.perf_counter()
    mode = cfg.resolved_center_mode(alphabet)
    k = cfg.resolved_kmer(alphabet)
    center_idx = select_center(seqs, mode, k=k)
    center = seqs[center_idx]
    report.add_stage("select_center", time.perf_counter() - t0)

    longest = max(len(s) for s in seqs)
    check_score_bound(len(center), longest, scheme)

    t0 = time.perf_counter()
    use_trie = alphabet.kind != "protein" and k <= len(center)
    if use_trie:
        children, fail, term_start, term_off = _trie_arrays(center, k)
    else:
        children, fail, term_start, term_off = _dummy_trie_arrays()
    center_enc = center.encoded()
    queries = [s for s in seqs if s.index != center.index]
    report.add_stage("build_trie", time.perf_counter() - t0)

    def encode_one(q, _ctx):
        return q.encoded()  # validates residues against the alphabet

    encoded, report = par_map_reduce(
        queries, None, map_fn=encode_one, cfg=run_cfg,
        stage="encode", report=report,
    )

    shared = (
        center_enc, children, fail, term_start, term_off,
        k, cfg.anchor_margin, scheme.matrix,
        scheme.gap_open, scheme.gap_extend,
        1 if use_trie else 0, alphabet.n_canonical,
    )

    def align_chunk(chunk_items, ctx):
        (c_enc, ch, fl, ts, to, kk, margin, sub, go, ge, ut, canon) = ctx
        qflat = np.concatenate(chunk_items) if chunk_items else np.zeros(0, np.uint8)
        qstarts = np.zeros(len(chunk_items) + 1, dtype=np.int64)
        np.cumsum([q.shape[0] for q in chunk_items], out=qstarts[1:])
        i_off, i_len, n_ins, d_off, d_len, n_del, scores, cells = align_chunk_kernel(
            c_enc, qflat, qstarts, ch, fl, ts, to, kk, margin, sub, go, ge, ut, canon
        )
        out = []
        ii = 0
        dd = 0
        for w in range(len(chunk_items)):
            ni = int(n_ins[w])
            nd = int(n_del[w])
            ins = [(int(i_off[ii + t]), int(i_len[ii + t])) for t in range(ni)]
            dels = [(int(d_off[dd + t]), int(d_len[dd + t])) for t in range(nd)]
            ii += ni
            dd += nd
            out.append((ins, dels, int(scores[w]), int(cells[w])))
        return out

    pair_results, report = par_map_reduce(
        encoded, shared, chunk_map_fn=align_chunk, cfg=run_cfg,
        stage="align", report=report,
    )

    t0 = time.perf_counter()
    center_gaps: dict[int, int] = {}
    total_cells = 0
    for ins_runs, _dels, _score, cells in pair_results:
        total_cells += cells
        for off, ln in ins_runs:
            if ln > center_gaps.get(off, 0):
                center_gaps[off] = ln
    report.bump("dp_cells", total_cells)
    report.bump("pairs", len(pair_results))
    report.add_stage("merge", time.perf_counter() - t0)

    cmap = _ColumnMap(center_gaps, len(center))
    render_items = [
        (q.residues, ins, dels)
        for q, (ins, dels, _s, _c) in zip(queries, pair_results)
    ]

    def render_one(item, ctx):
        residues, ins_runs, del_runs = item
        return _render_query_row_fast(residues, ins_runs, del_runs, ctx)

    rendered, report = par_map_reduce(
        render_items, cmap, map_fn=render_one, cfg=run_cfg,
        stage="render", report=report,
    )

    t0 = time.perf_counter()
    center_row = _render_query_row_fast(center.residues, [], [], cmap)
    rows_by_index: dict[int, tuple[str, str]] = {center.index: (center.id, center_row)}
    for q, row in zip(queries, rendered):
        rows_by_index[q.index] = (q.id, row)
    rows = [rows_by_index[s.index] for s in seqs]
    msa = Msa(rows=rows, n_cols=len(center_row), alphabet=alphabet)
    msa.validate(originals=[s.residues for s in seqs])
    report.add_stage("finalize", time.perf_counter() - t0)
    return msa
