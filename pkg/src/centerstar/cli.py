"""Command-line front door: align, score, tree, treescore, stats.

Configuration precedence is flags > config file (simple key=value lines)
> built-in defaults. Exit codes: 0 success, 1 usage error, 2 data error,
3 internal error. Diagnostics go to stderr; results go to files or
stdout only.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .engine import MemorySampler, RunReport
from .errors import CenterStarError, DataError, IoFailure, UsageError
from .metrics import jc69_loglik, sp_report
from .msa import MsaConfig, msa_from_sequences, run_msa
from .phylo import TreeConfig, build_tree, parse_newick, write_newick
from .pairwise import ScoreScheme, default_scheme
from .seqio import (
    Alphabet,
    dataset_stats,
    format_stats,
    read_fasta,
    write_fasta,
)

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_SCHEME_FLAGS = ("match", "mismatch", "gap_open", "gap_extend", "matrix")

# dest -> (type, default) per subcommand; None defaults resolve later
_SPECS: dict[str, dict[str, tuple]] = {
    "align": {
        "in_path": (str, None),
        "out": (str, None),
        "type": (str, None),
        "kmer": (int, None),
        "center": (str, None),
        "threads": (int, 0),
        "match": (int, None),
        "mismatch": (int, None),
        "gap_open": (int, None),
        "gap_extend": (int, None),
        "matrix": (str, None),
        "seed": (int, 0),
        "permissive": (bool, False),
        "report": (str, None),
    },
    "score": {
        "in_path": (str, None),
        "threads": (int, 0),
        "report": (str, None),
    },
    "tree": {
        "in_path": (str, None),
        "out": (str, None),
        "seed": (int, 0),
        "force_cluster": (bool, False),
        "balance_cap": (float, 0.10),
        "threads": (int, 0),
        "align_first": (bool, False),
        "type": (str, None),
        "kmer": (int, None),
        "center": (str, None),
        "match": (int, None),
        "mismatch": (int, None),
        "gap_open": (int, None),
        "gap_extend": (int, None),
        "matrix": (str, None),
        "permissive": (bool, False),
        "report": (str, None),
    },
    "treescore": {
        "in_path": (str, None),
        "tree_path": (str, None),
        "threads": (int, 0),
        "report": (str, None),
    },
    "stats": {
        "in_path": (str, None),
        "threads": (int, 0),
        "report": (str, None),
    },
}

_REQUIRED = {
    "align": ("in_path", "out"),
    "score": ("in_path",),
    "tree": ("in_path", "out"),
    "treescore": ("in_path", "tree_path"),
    "stats": ("in_path",),
}


def _add_common(p: _Parser, cmd: str) -> None:
    spec = _SPECS[cmd]
    p.add_argument("--in", dest="in_path", help="input FASTA (gzip detected)")
    if "out" in spec:
        p.add_argument("--out", dest="out", help="output file")
    if cmd == "treescore":
        p.add_argument("--tree", dest="tree_path", help="Newick tree file")
    if "type" in spec:
        p.add_argument("--type", choices=("dna", "rna", "protein"),
                       help="sequence type (default: auto-detect)")
        p.add_argument("--kmer", type=int, help="anchor k-mer length")
        p.add_argument("--center", choices=("first", "sampled"),
                       help="center selection mode")
        p.add_argument("--match", type=int, help="match score")
        p.add_argument("--mismatch", type=int, help="mismatch score")
        p.add_argument("--gap-open", dest="gap_open", type=int, help="gap open penalty (W_1)")
        p.add_argument("--gap-extend", dest="gap_extend", type=int,
                       help="gap extension penalty")
        p.add_argument("--matrix", help="NCBI-format substitution matrix file")
        p.add_argument("--permissive", action="store_const", const=True,
                       help="accept IUPAC ambiguity codes (scored as mismatches)")
    if "seed" in spec:
        p.add_argument("--seed", type=int, help="seed for all sampling")
    if cmd == "tree":
        p.add_argument("--force-cluster", dest="force_cluster",
                       action="store_const", const=True,
                       help="use the sample/cluster/graft path regardless of size")
        p.add_argument("--balance-cap", dest="balance_cap", type=float,
                       help="max cluster size as a fraction of n (default 0.10)")
        p.add_argument("--align-first", dest="align_first",
                       action="store_const", const=True,
                       help="input is unaligned; run the aligner first")
    p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")
    p.add_argument("--report", help="write run telemetry to FILE (and FILE.json)")
    p.add_argument("--config", help="key=value config file (flags win)")


def build_parser() -> _Parser:
    parser = _Parser(prog="centerstar", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"centerstar {__version__}")
    sub = parser.add_subparsers(dest="command")
    sub.required = True
    for cmd, helptext in (
        ("align", "center-star multiple sequence alignment"),
        ("score", "sum-of-pairs score of an aligned FASTA"),
        ("tree", "neighbor-joining tree from an alignment"),
        ("treescore", "JC69 log-likelihood of an alignment on a tree"),
        ("stats", "dataset statistics of a FASTA file"),
    ):
        p = sub.add_parser(cmd, help=helptext)
        _add_common(p, cmd)
    return parser


def _load_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        key = key.strip().lstrip("-").replace("-", "_")
        if key == "in":
            key = "in_path"
        if key == "tree":
            key = "tree_path"
        out[key] = val.strip()
    return out


def _coerce(key: str, raw: str, typ):
    if typ is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError as exc:
        raise UsageError(f"config key {key!r}: {exc}") from exc


def _resolve(args: argparse.Namespace) -> dict:
    """Merge flags > config file > defaults into one options dict."""
    spec = _SPECS[args.command]
    config = _load_config_file(args.config) if args.config else {}
    for key in config:
        if key not in spec:
            raise UsageError(
                f"config key {key!r} is not a flag of the {args.command!r} command"
            )
    opts = {}
    for dest, (typ, default) in spec.items():
        val = getattr(args, dest, None)
        if val is None and dest in config:
            val = _coerce(dest, config[dest], typ)
        if val is None:
            val = default
        opts[dest] = val
    for dest in _REQUIRED[args.command]:
        if opts[dest] is None:
            flag = {"in_path": "--in", "tree_path": "--tree"}.get(dest, "--" + dest)
            raise UsageError(f"{args.command}: {flag} is required")
    if opts.get("matrix") is not None:
        for other in ("match", "mismatch"):
            if opts.get(other) is not None:
                raise UsageError(
                    f"--matrix conflicts with --{other}: pick a matrix file or "
                    "match/mismatch scores, not both"
                )
    return opts


def _alphabet_hint(opts) -> Alphabet | None:
    if opts.get("type") is None:
        return None
    return Alphabet(opts["type"], bool(opts.get("permissive")))


def _scheme_from_opts(opts, alphabet: Alphabet) -> ScoreScheme:
    go = opts.get("gap_open")
    ge = opts.get("gap_extend")
    if opts.get("matrix") is not None:
        return ScoreScheme.from_ncbi_file(
            opts["matrix"], alphabet=alphabet,
            gap_open=go if go is not None else (11 if alphabet.kind == "protein" else 2),
            gap_extend=ge if ge is not None else 1,
        )
    if opts.get("match") is None and opts.get("mismatch") is None \
            and go is None and ge is None:
        return default_scheme(alphabet)
    if alphabet.kind == "protein":
        base = ScoreScheme.blosum62(
            gap_open=go if go is not None else 11,
            gap_extend=ge if ge is not None else 1,
            alphabet=alphabet,
        )
        if opts.get("match") is not None or opts.get("mismatch") is not None:
            raise UsageError(
                "--match/--mismatch apply to nucleotide inputs; use --matrix "
                "for proteins"
            )
        return base
    return ScoreScheme.nucleotide(
        alphabet=alphabet,
        match=opts["match"] if opts.get("match") is not None else 1,
        mismatch=opts["mismatch"] if opts.get("mismatch") is not None else -1,
        gap_open=go if go is not None else 2,
        gap_extend=ge if ge is not None else 1,
    )


def _write_report(report: RunReport, sampler: MemorySampler, path) -> None:
    report.baseline_rss = sampler.baseline
    report.peak_rss = sampler.peak
    report.write(path)


def _cmd_align(opts) -> int:
    with MemorySampler() as sampler:
        seqs = read_fasta(
            opts["in_path"],
            alphabet_hint=_alphabet_hint(opts),
            permissive=bool(opts.get("permissive")),
        )
        scheme = _scheme_from_opts(opts, seqs[0].alphabet)
        cfg = MsaConfig(
            center_mode=opts.get("center"),
            kmer=opts.get("kmer"),
            threads=opts["threads"],
            seed=opts["seed"],
        )
        msa, report = run_msa(seqs, scheme, cfg)
        write_fasta(msa, opts["out"])
    if opts.get("report"):
        _write_report(report, sampler, opts["report"])
    return 0


def _cmd_score(opts) -> int:
    seqs = read_fasta(opts["in_path"], allow_gaps=True)
    msa = msa_from_sequences(seqs)
    rep = sp_report(msa)
    print(f"n_pairs={rep.n_pairs}")
    print(f"total_sp={rep.total_sp}")
    print(f"avg_sp={rep.avg_str()}")
    return 0


def _cmd_tree(opts) -> int:
    with MemorySampler() as sampler:
        align_report = None
        if opts.get("align_first"):
            seqs = read_fasta(
                opts["in_path"],
                alphabet_hint=_alphabet_hint(opts),
                permissive=bool(opts.get("permissive")),
            )
            scheme = _scheme_from_opts(opts, seqs[0].alphabet)
            cfg = MsaConfig(
                center_mode=opts.get("center"),
                kmer=opts.get("kmer"),
                threads=opts["threads"],
                seed=opts["seed"],
            )
            msa, align_report = run_msa(seqs, scheme, cfg)
        else:
            seqs = read_fasta(
                opts["in_path"],
                alphabet_hint=_alphabet_hint(opts),
                permissive=bool(opts.get("permissive")),
                allow_gaps=True,
            )
            msa = msa_from_sequences(seqs)
        tcfg = TreeConfig(
            force_cluster=bool(opts.get("force_cluster")),
            balance_cap=opts["balance_cap"],
            seed=opts["seed"],
            threads=opts["threads"],
        )
        tree, report = build_tree(msa, tcfg)
        write_newick(tree, opts["out"])
    if align_report is not None:
        report.stages = align_report.stages + report.stages
        for k, v in align_report.counters.items():
            report.bump(k, v)
    if opts.get("report"):
        _write_report(report, sampler, opts["report"])
    return 0


def _cmd_treescore(opts) -> int:
    seqs = read_fasta(opts["in_path"], allow_gaps=True)
    msa = msa_from_sequences(seqs)
    try:
        with open(opts["tree_path"], "r") as fh:
            tree = parse_newick(fh.read())
    except OSError as exc:
        raise IoFailure(f"cannot read {opts['tree_path']}: {exc}") from exc
    score = jc69_loglik(msa, tree)
    print(f"model={score.model}")
    print(f"log_likelihood={score.log_likelihood!r}")
    return 0


def _cmd_stats(opts) -> int:
    seqs = read_fasta(opts["in_path"])
    print(format_stats(dataset_stats(seqs)))
    return 0


_COMMANDS = {
    "align": _cmd_align,
    "score": _cmd_score,
    "tree": _cmd_tree,
    "treescore": _cmd_treescore,
    "stats": _cmd_stats,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = _resolve(args)
        return _COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, IoFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CenterStarError as exc:
        cause = exc.__cause__
        if isinstance(cause, (DataError, IoFailure)):
            print(f"error: {cause}", file=sys.stderr)
            return 2
        print(f"internal error: {exc}", file=sys.stderr)
        if os.environ.get("CENTERSTAR_DEBUG"):
            raise
        return 3
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {exc}", file=sys.stderr)
        if os.environ.get("CENTERSTAR_DEBUG"):
            raise
        return 3


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
