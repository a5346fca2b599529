"""Center-star multiple sequence alignment and neighbor-joining trees.

Trie-anchored pairwise alignment for similar nucleotide sequences,
full dynamic programming for proteins, a deterministic threaded
map/reduce core, sum-of-pairs and JC69 scoring, and Newick output.
"""

__version__ = "0.1.0"

from .seqio import Alphabet, DatasetStats, Sequence, dataset_stats, parse_fasta, read_fasta, write_fasta
from .pairwise import DpMatrix, PairAlignment, ScoreScheme, global_align, sw_fill, sw_traceback
from .anchor import AnchorChain, KmerTrie, build_trie, chain_anchors, match_stream
from .msa import GapLedger, Msa, MsaConfig, align_to_center, merge_alignments, run_msa, select_center
from .metrics import SpReport, TreeScore, jc69_loglik, sp_pair, sp_report
from .phylo import (
    ClusterPlan,
    DistMatrix,
    PhyloTree,
    TreeConfig,
    build_tree,
    cluster_sequences,
    nj_build,
    p_distance,
    parse_newick,
    rf_distance,
    write_newick,
)
from .engine import RunConfig, RunReport, par_map_reduce

__all__ = [
    "Alphabet", "AnchorChain", "ClusterPlan", "DatasetStats", "DistMatrix",
    "DpMatrix", "GapLedger", "KmerTrie", "Msa", "MsaConfig", "PairAlignment",
    "PhyloTree", "RunConfig", "RunReport", "ScoreScheme", "Sequence",
    "SpReport", "TreeConfig", "TreeScore", "align_to_center", "build_tree",
    "build_trie", "chain_anchors", "cluster_sequences", "dataset_stats",
    "global_align", "jc69_loglik", "match_stream", "merge_alignments",
    "nj_build", "p_distance", "par_map_reduce", "parse_fasta", "parse_newick",
    "read_fasta", "rf_distance", "run_msa", "select_center", "sp_pair",
    "sp_report", "sw_fill", "sw_traceback", "write_fasta", "write_newick",
]
