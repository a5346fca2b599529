"""Distance-based phylogenetics: p-distance, canonical neighbor joining,
sample/cluster/graft construction for large inputs, and Newick I/O.

Trees are unrooted (adjacency with edge lengths) with a provisional root
used for serialization. All tie rules are fixed so that a given seed and
input produce byte-identical Newick at any thread count.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import MemorySampler, RunConfig, RunReport, par_map_reduce
from .errors import (
    DataError,
    IoFailure,
    NonFiniteDistance,
    TooFewSequences,
)
from .msa import Msa

_GAPB = ord("-")
_NEWICK_UNSAFE = set("()[]{}:;,'\" \t\n")


@dataclass
class DistMatrix:
    d: np.ndarray  # float64 symmetric, zero diagonal
    labels: list[str]
    degenerate_pairs: list[tuple[int, int]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.labels)


class PhyloTree:
    """Unrooted tree: adjacency with branch lengths, labelled leaves."""

    def __init__(self):
        self._adj: dict[int, list[tuple[int, float]]] = {}
        self.leaf_labels: dict[int, str] = {}
        self.root: int | None = None
        self._next = 0

    def new_node(self, label: str | None = None) -> int:
        nid = self._next
        self._next += 1
        self._adj[nid] = []
        if label is not None:
            self.leaf_labels[nid] = label
        return nid

    def add_edge(self, u: int, v: int, length: float) -> None:
        self._adj[u].append((v, float(length)))
        self._adj[v].append((u, float(length)))

    def remove_edge(self, u: int, v: int) -> None:
        self._adj[u] = [(x, w) for x, w in self._adj[u] if x != v]
        self._adj[v] = [(x, w) for x, w in self._adj[v] if x != u]

    def drop_node(self, u: int) -> None:
        for v, _w in list(self._adj[u]):
            self.remove_edge(u, v)
        del self._adj[u]
        self.leaf_labels.pop(u, None)

    def neighbors(self, u: int) -> list[tuple[int, float]]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    @property
    def n_nodes(self) -> int:
        return len(self._adj)

    def nodes(self):
        return self._adj.keys()

    def leaves(self) -> list[int]:
        return sorted(self.leaf_labels)

    def leaf_names(self) -> list[str]:
        return sorted(self.leaf_labels.values())

    def rooted(self, root: int | None = None):
        """Orient at ``root``: (root, {node: [(child, length)]}, postorder)."""
        if root is None:
            root = self.root
        if root is None:
            root = next(iter(self._adj))
        children: dict[int, list[tuple[int, float]]] = {}
        postorder: list[int] = []
        stack = [(root, -1, False)]
        while stack:
            node, parent, done = stack.pop()
            if done:
                postorder.append(node)
                continue
            kids = [(v, w) for v, w in self._adj[node] if v != parent]
            children[node] = kids
            stack.append((node, parent, True))
            for v, _w in kids:
                stack.append((v, node, False))
        return root, children, postorder

    def splits(self) -> dict[frozenset, float]:
        """Every edge as the leaf-label set on its far side from a fixed
        reference leaf, mapped to the branch length."""
        if not self.leaf_labels:
            return {}
        ref = min(self.leaf_labels.values())
        root = next(nid for nid, name in self.leaf_labels.items() if name == ref)
        _root, children, postorder = self.rooted(root)
        below: dict[int, frozenset] = {}
        out: dict[frozenset, float] = {}
        for node in postorder:
            kids = children[node]
            if not kids:
                below[node] = frozenset([self.leaf_labels[node]])
            else:
                acc = frozenset()
                for child, _w in kids:
                    acc |= below[child]
                below[node] = acc
        for node in postorder:
            for child, w in children[node]:
                out[below[child]] = out.get(below[child], 0.0) + w
        return out

    def newick(self) -> str:
        return _to_newick(self)


def _quote_label(label: str) -> str:
    if label and not (set(label) & _NEWICK_UNSAFE):
        return label
    return "'" + label.replace("'", "''") + "'"


def _fmt_len(w: float) -> str:
    return repr(float(w))


def _to_newick(tree: PhyloTree) -> str:
    root, children, postorder = tree.rooted()
    text: dict[int, str] = {}
    min_label: dict[int, str] = {}
    for node in postorder:
        kids = children[node]
        if not kids:
            name = tree.leaf_labels[node]
            text[node] = _quote_label(name)
            min_label[node] = name
            continue
        parts = sorted(
            ((min_label[c], text[c] + ":" + _fmt_len(w)) for c, w in kids),
            key=lambda t: t[0],
        )
        text[node] = "(" + ",".join(p for _m, p in parts) + ")"
        min_label[node] = min(m for m, _p in parts)
    return text[root] + ";"


def write_newick(tree: PhyloTree, sink) -> None:
    """Serialize with deterministic child order and shortest round-trip
    branch lengths."""
    s = tree.newick()
    own = False
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        try:
            sink = open(sink, "w")
        except OSError as exc:
            raise IoFailure(f"cannot open {sink} for writing: {exc}") from exc
        own = True
    try:
        sink.write(s)
        sink.write("\n")
    except OSError as exc:
        raise IoFailure(f"write failed: {exc}") from exc
    finally:
        if own:
            sink.close()


def parse_newick(text: str) -> PhyloTree:
    """Parse a Newick string (quoted labels and branch lengths supported)."""
    s = text.strip()
    if not s.endswith(";"):
        raise DataError("Newick text must end with ';'")
    s = s[:-1]
    tree = PhyloTree()
    pos = 0

    def parse_label():
        nonlocal pos
        if pos < len(s) and s[pos] == "'":
            pos += 1
            out = []
            while pos < len(s):
                if s[pos] == "'":
                    if pos + 1 < len(s) and s[pos + 1] == "'":
                        out.append("'")
                        pos += 2
                        continue
                    pos += 1
                    return "".join(out)
                out.append(s[pos])
                pos += 1
            raise DataError("unterminated quoted label")
        start = pos
        while pos < len(s) and s[pos] not in "():,;":
            pos += 1
        return s[start:pos].strip()

    def parse_length():
        nonlocal pos
        if pos < len(s) and s[pos] == ":":
            pos += 1
            start = pos
            while pos < len(s) and s[pos] not in "(),;":
                pos += 1
            try:
                return float(s[start:pos])
            except ValueError as exc:
                raise DataError(f"bad branch length {s[start:pos]!r}") from exc
        return 0.0

    def parse_node():
        nonlocal pos
        node = tree.new_node()
        if pos < len(s) and s[pos] == "(":
            pos += 1
            while True:
                child = parse_node()
                w = parse_length()
                tree.add_edge(node, child, w)
                if pos < len(s) and s[pos] == ",":
                    pos += 1
                    continue
                break
            if pos >= len(s) or s[pos] != ")":
                raise DataError("unbalanced parentheses in Newick text")
            pos += 1
            parse_label()  # internal labels are accepted and discarded
        else:
            label = parse_label()
            if not label:
                raise DataError("leaf with empty label")
            tree.leaf_labels[node] = label
        return node

    root = parse_node()
    parse_length()
    if pos != len(s):
        raise DataError(f"trailing characters in Newick text: {s[pos:]!r}")
    tree.root = root
    return tree


def rf_distance(t1: PhyloTree, t2: PhyloTree) -> int:
    """Robinson-Foulds distance: symmetric difference of non-trivial splits."""
    if set(t1.leaf_names()) != set(t2.leaf_names()):
        raise DataError("trees have different leaf sets")
    n = len(t1.leaf_names())

    def nontrivial(tree):
        return {
            sp for sp in tree.splits() if 1 < len(sp) < n - 1
        }

    return len(nontrivial(t1) ^ nontrivial(t2))


# ---------------------------------------------------------------------------
# distances


def _rows_array(msa: Msa) -> np.ndarray:
    arr = np.frombuffer("".join(msa.row_strings()).encode("ascii"), dtype=np.uint8)
    return arr.reshape(len(msa), msa.n_cols)


def p_distance(msa: Msa, threads: int = 1) -> DistMatrix:
    """Mismatch fraction over columns where neither row has a gap.

    Pairs with no comparable column get distance 1 and are flagged in
    ``degenerate_pairs``.
    """
    n = len(msa)
    if n < 2:
        raise TooFewSequences("p-distance needs at least 2 rows")
    arr = _rows_array(msa)
    gaps = arr == _GAPB
    d = np.zeros((n, n), dtype=np.float64)
    degenerate: list[tuple[int, int]] = []

    def one_row(i, _shared):
        valid = ~gaps[i] & ~gaps[i + 1 :]
        comp = valid.sum(axis=1)
        mism = (valid & (arr[i] != arr[i + 1 :])).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            row = np.where(comp > 0, mism / np.maximum(comp, 1), 1.0)
        return row, comp

    items = list(range(n - 1))
    cfg = RunConfig(threads=threads if threads else 0)
    results, _report = par_map_reduce(items, None, map_fn=one_row, cfg=cfg,
                                      stage="p_distance")
    for i, (row, comp) in zip(items, results):
        d[i, i + 1 :] = row
        d[i + 1 :, i] = row
        for off in np.nonzero(comp == 0)[0]:
            degenerate.append((i, i + 1 + int(off)))
    return DistMatrix(d=d, labels=msa.ids(), degenerate_pairs=degenerate)


# ---------------------------------------------------------------------------
# neighbor joining


def nj_build(dm: DistMatrix, join_trace: list | None = None) -> PhyloTree:
    """Canonical Saitou-Nei neighbor joining.

    Joins the pair minimizing Q(i,j) = (r-2) d(i,j) - R_i - R_j, ties to
    the lexicographically smallest matrix position; branch lengths from
    the two-point formulas with negative estimates clamped to zero and
    the deficit moved to the sibling edge. Exact on additive matrices.
    """
    n = dm.n
    if n < 3:
        raise TooFewSequences("neighbor joining needs at least 3 taxa")
    if not np.isfinite(dm.d).all():
        raise NonFiniteDistance("distance matrix contains non-finite values")

    tree = PhyloTree()
    size = 2 * n
    D = np.zeros((size, size), dtype=np.float64)
    D[:n, :n] = dm.d
    node_of: dict[int, int] = {}
    for i, label in enumerate(dm.labels):
        node_of[i] = tree.new_node(label)
    active = list(range(n))
    nxt = n

    while len(active) > 3:
        r = len(active)
        sub = D[np.ix_(active, active)]
        sums = sub.sum(axis=1)
        q = (r - 2) * sub - sums[:, None] - sums[None, :]
        iu, ju = np.triu_indices(r, k=1)
        vals = q[iu, ju]
        pos = int(np.argmax(vals == vals.min()))  # first => smallest (i, j)
        i, j = int(iu[pos]), int(ju[pos])
        if join_trace is not None:
            join_trace.append((i, j))
        dij = sub[i, j]
        li = 0.5 * dij + (sums[i] - sums[j]) / (2.0 * (r - 2))
        lj = dij - li
        if li < 0.0:
            lj += li
            li = 0.0
        if lj < 0.0:
            li += lj
            lj = 0.0
        u = tree.new_node()
        tree.add_edge(u, node_of[active[i]], li)
        tree.add_edge(u, node_of[active[j]], lj)
        ai, aj = active[i], active[j]
        rest = [a for a in active if a != ai and a != aj]
        for a in rest:
            D[nxt, a] = D[a, nxt] = 0.5 * (D[ai, a] + D[aj, a] - dij)
        node_of[nxt] = u
        active = rest + [nxt]
        nxt += 1

    a, b, c = active
    la = 0.5 * (D[a, b] + D[a, c] - D[b, c])
    lb = 0.5 * (D[a, b] + D[b, c] - D[a, c])
    lc = 0.5 * (D[a, c] + D[b, c] - D[a, b])
    root = tree.new_node()
    tree.add_edge(root, node_of[a], max(la, 0.0))
    tree.add_edge(root, node_of[b], max(lb, 0.0))
    tree.add_edge(root, node_of[c], max(lc, 0.0))
    tree.root = root
    return tree


# ---------------------------------------------------------------------------
# clustering (sample, complete linkage, medoid assignment, balancing)


@dataclass(frozen=True)
class ClusterConfig:
    sample_frac: float = 0.10
    balance_cap: float = 0.10
    seed: int = 0


@dataclass
class ClusterPlan:
    assignments: np.ndarray  # int32, sequence index -> cluster id
    medoids: list[int]
    sizes: list[int]


def _pdist_submatrix(arr: np.ndarray, idx: list[int]) -> np.ndarray:
    sub = arr[idx]
    gaps = sub == _GAPB
    m = len(idx)
    d = np.zeros((m, m), dtype=np.float64)
    for i in range(m - 1):
        valid = ~gaps[i] & ~gaps[i + 1 :]
        comp = valid.sum(axis=1)
        mism = (valid & (sub[i] != sub[i + 1 :])).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            row = np.where(comp > 0, mism / np.maximum(comp, 1), 1.0)
        d[i, i + 1 :] = row
        d[i + 1 :, i] = row
    return d


def _pdist_to_rows(arr: np.ndarray, source: int, targets: list[int]) -> np.ndarray:
    a = arr[source]
    sub = arr[targets]
    ga = a == _GAPB
    gb = sub == _GAPB
    valid = ~ga & ~gb
    comp = valid.sum(axis=1)
    mism = (valid & (a != sub)).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(comp > 0, mism / np.maximum(comp, 1), 1.0)


def _complete_linkage(d: np.ndarray, target: int) -> list[list[int]]:
    """Agglomerate to ``target`` clusters (max linkage, Lance-Williams
    update); merge ties take the smallest (i, j) cluster positions."""
    clusters: list[list[int]] = [[i] for i in range(d.shape[0])]
    link = d.copy()
    while len(clusters) > target:
        m = len(clusters)
        iu, ju = np.triu_indices(m, k=1)
        vals = link[iu, ju]
        pos = int(np.argmax(vals == vals.min()))
        i, j = int(iu[pos]), int(ju[pos])
        new_row = np.maximum(link[i], link[j])
        link[i, :] = new_row
        link[:, i] = new_row
        link[i, i] = 0.0
        keep = [t for t in range(m) if t != j]
        link = link[np.ix_(keep, keep)]
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    return clusters


def _medoid(d: np.ndarray, members: list[int]) -> int:
    """Member minimizing its intra-cluster distance sum, ties to the
    smallest index (positions are into d)."""
    best = None
    best_sum = None
    for m in sorted(members):
        s = sum(d[m, x] for x in members if x != m)
        if best_sum is None or s < best_sum:
            best_sum = s
            best = m
    return best


def cluster_sequences(msa: Msa, cfg: ClusterConfig = ClusterConfig()) -> ClusterPlan:
    """Sample, cluster the sample, assign everything to the nearest medoid,
    then merge singleton clusters and split oversized ones until the
    balance cap holds."""
    n = len(msa)
    arr = _rows_array(msa)
    if n < 10:
        d = _pdist_submatrix(arr, list(range(n)))
        med = _medoid(d, list(range(n)))
        return ClusterPlan(
            assignments=np.zeros(n, dtype=np.int32), medoids=[med], sizes=[n]
        )

    rng = np.random.default_rng(cfg.seed)
    sample_size = math.ceil(cfg.sample_frac * n)
    sample = sorted(int(x) for x in rng.choice(n, size=sample_size, replace=False))
    sd = _pdist_submatrix(arr, sample)
    r = math.isqrt(sample_size)
    c = r if r * r == sample_size else r + 1
    sample_clusters = _complete_linkage(sd, c)
    medoids = [sample[_medoid(sd, members)] for members in sample_clusters]

    def nearest_medoid(seq_indices: list[int], med_list: list[int]) -> np.ndarray:
        dist = np.stack(
            [_pdist_to_rows(arr, m, seq_indices) for m in med_list], axis=0
        )
        return np.argmin(dist, axis=0)  # argmin takes the first (smallest id) on ties

    assignments = np.asarray(
        nearest_medoid(list(range(n)), medoids), dtype=np.int32
    )

    def regroup(assign, med_list):
        groups = [sorted(np.nonzero(assign == ci)[0].tolist())
                  for ci in range(len(med_list))]
        return groups

    groups = regroup(assignments, medoids)

    # merge clusters smaller than 2 into the nearest other medoid's cluster
    while True:
        small = [ci for ci, g in enumerate(groups) if len(g) < 2]
        if not small or len(groups) == 1:
            break
        ci = small[0]
        others = [cj for cj in range(len(groups)) if cj != ci]
        dists = _pdist_to_rows(arr, medoids[ci], [medoids[cj] for cj in others])
        tgt = others[int(np.argmin(dists))]
        groups[tgt] = sorted(groups[tgt] + groups[ci])
        del groups[ci]
        del medoids[ci]

    # split oversized clusters until the cap holds
    cap = math.ceil(cfg.balance_cap * n)
    unsplittable: set[int] = set()
    while True:
        over = [
            ci for ci, g in enumerate(groups)
            if len(g) > cap and ci not in unsplittable
        ]
        if not over:
            break
        ci = max(over, key=lambda x: (len(groups[x]), -x))
        members = groups[ci]
        d = _pdist_submatrix(arr, members)
        iu, ju = np.triu_indices(len(members), k=1)
        far = int(np.argmax(d[iu, ju]))
        s1, s2 = int(iu[far]), int(ju[far])
        if d[iu[far], ju[far]] == 0.0:
            # all members identical: splitting would be arbitrary, leave whole
            unsplittable.add(ci)
            continue
        to_first = d[:, s1] <= d[:, s2]
        t1 = [t for t in range(len(members)) if to_first[t]]
        t2 = [t for t in range(len(members)) if not to_first[t]]
        g1 = [members[t] for t in t1]
        g2 = [members[t] for t in t2]
        m1 = members[_medoid(d, t1)]
        m2 = members[_medoid(d, t2)]
        groups[ci] = g1
        medoids[ci] = m1
        groups.append(g2)
        medoids.append(m2)

    assignments = np.zeros(n, dtype=np.int32)
    for ci, g in enumerate(groups):
        for x in g:
            assignments[x] = ci
    return ClusterPlan(
        assignments=assignments,
        medoids=list(medoids),
        sizes=[len(g) for g in groups],
    )


# ---------------------------------------------------------------------------
# full tree construction


@dataclass(frozen=True)
class TreeConfig:
    direct_threshold: int = 2000
    force_cluster: bool = False
    sample_frac: float = 0.10
    balance_cap: float = 0.10
    seed: int = 0
    threads: int = 0


def _copy_into(dst: PhyloTree, src: PhyloTree) -> dict[int, int]:
    remap: dict[int, int] = {}
    for node in sorted(src.nodes()):
        remap[node] = dst.new_node(src.leaf_labels.get(node))
    seen = set()
    for u in sorted(src.nodes()):
        for v, w in src.neighbors(u):
            if (v, u) in seen:
                continue
            seen.add((u, v))
            dst.add_edge(remap[u], remap[v], w)
    return remap


def _graft(skeleton: PhyloTree, leaf_node: int, subtree: PhyloTree, medoid_label: str) -> None:
    """Replace a skeleton leaf by the cluster subtree, attached at the far
    end of the medoid's pendant edge via a fresh degree-3 node."""
    (parent, blen), = skeleton.neighbors(leaf_node)
    remap = _copy_into(skeleton, subtree)
    medoid_node = next(
        remap[nid] for nid, name in subtree.leaf_labels.items() if name == medoid_label
    )
    (u, plen), = [(v, w) for v, w in skeleton.neighbors(medoid_node)]
    skeleton.remove_edge(medoid_node, u)
    w = skeleton.new_node()
    skeleton.drop_node(leaf_node)
    skeleton.add_edge(parent, w, blen)
    skeleton.add_edge(w, medoid_node, plen)
    skeleton.add_edge(w, u, 0.0)


def _cherry(label_a: str, label_b: str, dist: float) -> PhyloTree:
    t = PhyloTree()
    a = t.new_node(label_a)
    b = t.new_node(label_b)
    t.add_edge(a, b, dist)
    t.root = a
    return t


def build_tree(msa: Msa, cfg: TreeConfig = TreeConfig()) -> tuple[PhyloTree, RunReport]:
    """NJ directly when the input fits; otherwise cluster, build per-cluster
    trees in parallel, and graft them onto a medoid skeleton."""
    n = len(msa)
    if n < 3:
        raise TooFewSequences("tree construction needs at least 3 sequences")
    report = RunReport()
    with MemorySampler() as sampler:
        tree = _build_tree_stages(msa, cfg, report)
    report.baseline_rss = sampler.baseline
    report.peak_rss = sampler.peak
    return tree, report


def _build_tree_stages(msa: Msa, cfg: TreeConfig, report: RunReport) -> PhyloTree:
    n = len(msa)
    t0 = time.perf_counter()
    dm = p_distance(msa, threads=cfg.threads)
    report.add_stage("p_distance", time.perf_counter() - t0)

    if (n <= cfg.direct_threshold and not cfg.force_cluster):
        t0 = time.perf_counter()
        tree = nj_build(dm)
        report.add_stage("nj", time.perf_counter() - t0)
        report.bump("clusters", 1)
        return tree

    t0 = time.perf_counter()
    plan = cluster_sequences(
        msa, ClusterConfig(cfg.sample_frac, cfg.balance_cap, cfg.seed)
    )
    report.add_stage("cluster", time.perf_counter() - t0)
    report.bump("clusters", len(plan.medoids))

    groups = [
        sorted(np.nonzero(plan.assignments == ci)[0].tolist())
        for ci in range(len(plan.medoids))
    ]
    if len(groups) == 1:
        t0 = time.perf_counter()
        tree = nj_build(dm)
        report.add_stage("nj", time.perf_counter() - t0)
        return tree

    labels = msa.ids()

    def one_subtree(ci, _shared):
        members = groups[ci]
        if len(members) == 1:
            return None
        if len(members) == 2:
            a, b = members
            return _cherry(labels[a], labels[b], float(dm.d[a, b]))
        sub = DistMatrix(
            d=dm.d[np.ix_(members, members)].copy(),
            labels=[labels[x] for x in members],
        )
        return nj_build(sub)

    subtrees, report = par_map_reduce(
        list(range(len(groups))), None, map_fn=one_subtree,
        cfg=RunConfig(threads=cfg.threads), stage="cluster_nj", report=report,
    )

    t0 = time.perf_counter()
    med = plan.medoids
    if len(med) == 2:
        skeleton = _cherry(labels[med[0]], labels[med[1]], float(dm.d[med[0], med[1]]))
    else:
        skel_dm = DistMatrix(
            d=dm.d[np.ix_(med, med)].copy(), labels=[labels[x] for x in med]
        )
        skeleton = nj_build(skel_dm)

    for ci, sub in enumerate(subtrees):
        if sub is None:
            continue  # singleton cluster: the skeleton leaf already is the member
        medoid_label = labels[med[ci]]
        leaf_node = next(
            nid for nid, name in skeleton.leaf_labels.items() if name == medoid_label
        )
        if skeleton.root == leaf_node:
            skeleton.root = skeleton.neighbors(leaf_node)[0][0]
        _graft(skeleton, leaf_node, sub, medoid_label)
    if skeleton.root is None or skeleton.root not in skeleton._adj:
        skeleton.root = max(
            skeleton.nodes(), key=lambda u: (skeleton.degree(u), -u)
        )
    report.add_stage("graft", time.perf_counter() - t0)
    return skeleton
