import gzip
import json

import numpy as np
import pytest

from oracles import clone_dataset

from centerstar.cli import build_parser, main
from centerstar.errors import UsageError


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(40)
    strs = clone_dataset(rng, 10, 120, 4)
    path = tmp_path / "in.fasta"
    with open(path, "w") as fh:
        for i, s in enumerate(strs):
            fh.write(f">seq{i}\n{s}\n")
    return path


def test_align_writes_output(dataset, tmp_path, capsys):
    out = tmp_path / "out.fasta"
    assert main(["align", "--in", str(dataset), "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith(">seq0")
    assert capsys.readouterr().out == ""


def test_align_report_files(dataset, tmp_path):
    out = tmp_path / "out.fasta"
    rep = tmp_path / "rep.txt"
    assert main(["align", "--in", str(dataset), "--out", str(out),
                 "--report", str(rep), "--threads", "2"]) == 0
    text = rep.read_text()
    assert "stage.align.seconds=" in text
    assert "counter.dp_cells=" in text
    data = json.loads((tmp_path / "rep.txt.json").read_text())
    assert data["threads"] == 2


def test_score_prints_values(dataset, tmp_path, capsys):
    out = tmp_path / "out.fasta"
    main(["align", "--in", str(dataset), "--out", str(out)])
    assert main(["score", "--in", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    keys = {l.split("=")[0] for l in lines}
    assert keys == {"n_pairs", "total_sp", "avg_sp"}


def test_tree_and_treescore(dataset, tmp_path, capsys):
    aligned = tmp_path / "out.fasta"
    nwk = tmp_path / "t.nwk"
    main(["align", "--in", str(dataset), "--out", str(aligned)])
    assert main(["tree", "--in", str(aligned), "--out", str(nwk), "--seed", "3"]) == 0
    assert nwk.read_text().endswith(";\n")
    assert main(["treescore", "--in", str(aligned), "--tree", str(nwk)]) == 0
    out = capsys.readouterr().out
    assert "log_likelihood=" in out
    ll = float(out.split("log_likelihood=")[1].split()[0])
    assert ll <= 0


def test_tree_align_first_on_raw_input(dataset, tmp_path):
    nwk = tmp_path / "t.nwk"
    assert main(["tree", "--in", str(dataset), "--out", str(nwk),
                 "--align-first", "--seed", "1"]) == 0
    assert nwk.read_text().count("seq") == 10


def test_tree_rejects_ragged_unaligned_input(dataset, tmp_path, capsys):
    nwk = tmp_path / "t.nwk"
    code = main(["tree", "--in", str(dataset), "--out", str(nwk)])
    assert code == 2
    assert "aligned" in capsys.readouterr().err


def test_stats_values(tmp_path, capsys):
    path = tmp_path / "s.fasta"
    path.write_text(">a\nACG\n>b\nACGT\n")
    assert main(["stats", "--in", str(path)]) == 0
    out = capsys.readouterr().out
    assert "count=2" in out
    assert "avg_len=3.5" in out


def test_gzip_input(tmp_path, capsys):
    path = tmp_path / "s.fasta.gz"
    path.write_bytes(gzip.compress(b">a\nACG\n>b\nACGT\n"))
    assert main(["stats", "--in", str(path)]) == 0
    assert "count=2" in capsys.readouterr().out


def test_missing_input_is_data_error(tmp_path, capsys):
    code = main(["align", "--in", str(tmp_path / "nope.fa"), "--out",
                 str(tmp_path / "o")])
    assert code == 2
    assert "nope.fa" in capsys.readouterr().err


def test_conflicting_flags_usage_error(dataset, tmp_path, capsys):
    code = main(["align", "--in", str(dataset), "--out", str(tmp_path / "o"),
                 "--match", "2", "--matrix", "m.txt"])
    assert code == 1
    err = capsys.readouterr().err
    assert "--matrix" in err and "--match" in err


def test_unknown_flag_usage_error(dataset, tmp_path, capsys):
    code = main(["align", "--in", str(dataset), "--out", str(tmp_path / "o"),
                 "--frobnicate"])
    assert code == 1


def test_missing_required_flag(capsys):
    assert main(["align"]) == 1
    assert "--in" in capsys.readouterr().err


def test_malformed_fasta_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.fasta"
    bad.write_text("ACGT\n>s\nACGT\n")
    assert main(["stats", "--in", str(bad)]) == 2


def test_config_file_provides_defaults_flags_win(dataset, tmp_path):
    cfgfile = tmp_path / "cs.conf"
    cfgfile.write_text("mismatch=-3\ngap-open=4\n")
    out1 = tmp_path / "o1.fasta"
    out2 = tmp_path / "o2.fasta"
    out3 = tmp_path / "o3.fasta"
    assert main(["align", "--in", str(dataset), "--out", str(out1),
                 "--config", str(cfgfile)]) == 0
    # flag overrides the config value
    assert main(["align", "--in", str(dataset), "--out", str(out2),
                 "--config", str(cfgfile), "--mismatch", "-1", "--gap-open", "2"]) == 0
    assert main(["align", "--in", str(dataset), "--out", str(out3),
                 "--mismatch", "-3", "--gap-open", "4"]) == 0
    assert out1.read_text() == out3.read_text()


def test_config_unknown_key_rejected(dataset, tmp_path, capsys):
    cfgfile = tmp_path / "cs.conf"
    cfgfile.write_text("wibble=1\n")
    code = main(["align", "--in", str(dataset), "--out", str(tmp_path / "o"),
                 "--config", str(cfgfile)])
    assert code == 1
    assert "wibble" in capsys.readouterr().err


def test_seed_reproducibility(dataset, tmp_path):
    outs = []
    for name in ("a.nwk", "b.nwk"):
        nwk = tmp_path / name
        main(["tree", "--in", str(dataset), "--out", str(nwk),
              "--align-first", "--seed", "7"])
        outs.append(nwk.read_bytes())
    assert outs[0] == outs[1]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert "centerstar" in capsys.readouterr().out


def test_help_lists_declared_flags():
    parser = build_parser()
    expectations = {
        "align": ["--in", "--out", "--type", "--kmer", "--center", "--threads",
                  "--match", "--mismatch", "--gap-open", "--gap-extend",
                  "--matrix", "--seed", "--report", "--config"],
        "tree": ["--in", "--out", "--seed", "--force-cluster", "--balance-cap",
                 "--threads", "--align-first", "--report"],
        "score": ["--in", "--threads", "--report"],
        "treescore": ["--in", "--tree", "--threads"],
        "stats": ["--in", "--threads"],
    }
    for cmd, flags in expectations.items():
        sub = None
        for action in parser._actions:
            if hasattr(action, "choices") and action.choices and cmd in action.choices:
                sub = action.choices[cmd]
        helptext = sub.format_help()
        for flag in flags:
            assert flag in helptext, f"{cmd} help missing {flag}"


def test_permissive_flag_allows_iupac(tmp_path):
    path = tmp_path / "amb.fasta"
    path.write_text(">a\nACGRACGT\n>b\nACGTACGT\n")
    out = tmp_path / "out.fasta"
    # R is not plain DNA: rejected under --type dna unless --permissive
    assert main(["align", "--in", str(path), "--out", str(out),
                 "--type", "dna"]) == 2
    assert main(["align", "--in", str(path), "--out", str(out),
                 "--permissive", "--type", "dna"]) == 0
    assert "R" in out.read_text()
