import json

import pytest

from kromlab.cli import main
from kromlab.logic import FragmentKind, classify
from kromlab.textio import parse_formula, parse_structure

from conftest import EXAMPLE22_TEXT

CYCLE3 = "domain 3\nrel E/2 = {(0,1),(1,2),(2,0)}\n"
CASE2 = "forall2 X/1. all x y. (P(x,y) | X(x) | ~X(y))\n"
SIGMA4 = "4\ne x1\na x2\ne x3\na x4\nt x1 -x2\nt x2 -x4\nt x3 x4\n"


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "example22.sof").write_text(EXAMPLE22_TEXT + "\n")
    (tmp_path / "cycle3.fst").write_text(CYCLE3)
    (tmp_path / "case2.sof").write_text(CASE2)
    (tmp_path / "q4.qbf").write_text(SIGMA4)
    return tmp_path


def test_check_false_exit_one(workdir, capsys):
    code = main(["check", str(workdir / "example22.sof"),
                 str(workdir / "cycle3.fst")])
    assert code == 1
    assert capsys.readouterr().out == "false\n"


def test_check_true_exit_zero(workdir, capsys):
    (workdir / "two.fst").write_text("domain 2\nrel E/2 = {(0,1)}\n")
    code = main(["check", str(workdir / "example22.sof"),
                 str(workdir / "two.fst")])
    assert code == 0
    assert capsys.readouterr().out == "true\n"


def test_transform_drop_universal(workdir, capsys):
    out = workdir / "out.sof"
    code = main(["transform", "--rule", "drop-universal",
                 str(workdir / "case2.sof"), "-o", str(out)])
    assert code == 0
    result = parse_formula(out.read_text())
    assert classify(result).kind is FragmentKind.FO_UNIVERSAL_CNF


def test_transform_trace_goes_to_stderr(workdir, capsys):
    code = main(["transform", "--rule", "drop-universal",
                 str(workdir / "case2.sof"), "--trace"])
    assert code == 0
    captured = capsys.readouterr()
    assert "case2-equality" in captured.err
    assert "case2-equality" not in captured.out


def test_transform_expand(workdir, capsys):
    out = workdir / "expanded.sof"
    code = main(["transform", "--rule", "expand-exists",
                 str(workdir / "example22.sof"), "-o", str(out)])
    assert code == 0
    reparsed = parse_formula(out.read_text())
    assert reparsed is not None  # disjunction prints as a general expression


def test_transform_skolemize(workdir):
    (workdir / "fo.sof").write_text("forall x. exists y. E(x,y)\n")
    out = workdir / "sk.sof"
    assert main(["transform", "--rule", "skolemize",
                 str(workdir / "fo.sof"), "-o", str(out)]) == 0
    assert out.read_text().startswith("exists2")


def test_equiv_self(workdir, capsys):
    code = main(["equiv", str(workdir / "case2.sof"),
                 str(workdir / "case2.sof"), "--max-size", "2"])
    assert code == 0
    assert capsys.readouterr().out == "equivalent-up-to-bound 2\n"


def test_equiv_counterexample(workdir, capsys):
    (workdir / "p.sof").write_text("all x. (P(x))\n")
    (workdir / "notp.sof").write_text("all x. (~P(x))\n")
    code = main(["equiv", str(workdir / "p.sof"), str(workdir / "notp.sof"),
                 "--max-size", "2"])
    assert code == 1
    out = capsys.readouterr().out
    assert "counterexample" in out
    block = out.split("\n", 1)[1]
    parse_structure(block)  # the counterexample is printed as a structure


def test_ground_qdimacs(workdir, capsys):
    code = main(["ground", str(workdir / "example22.sof"),
                 str(workdir / "cycle3.fst")])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("p cnf 18 ")
    assert "c atom 1 R(0,0)" in out


def test_encode_qbf_outputs(workdir, capsys):
    code = main(["encode-qbf", str(workdir / "q4.qbf"),
                 "-o", str(workdir / "enc")])
    assert code == 0
    structure = parse_structure((workdir / "enc.fst").read_text())
    assert structure.n == 7
    phi = parse_formula((workdir / "enc.sof").read_text())
    assert classify(phi).k == 5


def test_translate_audit(workdir, capsys):
    (workdir / "src.sof").write_text(
        "exists2 X1/1. forall2 X2/1. forall x. (~X1(x) | ~X2(x) | E(x,x))\n")
    out = workdir / "tr.sof"
    theta = workdir / "theta.sof"
    code = main(["translate", "--target", "krom-r", str(workdir / "src.sof"),
                 "-o", str(out), "--emit-theta", str(theta)])
    assert code == 0
    audit = json.loads(capsys.readouterr().out.splitlines()[0])
    assert audit["d"] == 10 and audit["m"] == 4
    assert audit["classify"] == "Sigma^1_3-KROM^r"
    assert out.read_text().strip()
    assert theta.read_text().startswith("exists2")


def test_enumerate_streams_blocks(workdir, capsys):
    (workdir / "v.voc").write_text("rel P/1\n")
    code = main(["enumerate", "--vocab", str(workdir / "v.voc"),
                 "--size", "1"])
    assert code == 0
    blocks = capsys.readouterr().out.strip().split("\n\n")
    assert len(blocks) == 2
    for block in blocks:
        parse_structure(block)


def test_equiv_with_explicit_vocabulary(workdir, capsys):
    (workdir / "v.voc").write_text("rel P/1\nrel Q/1\n")
    (workdir / "a.sof").write_text("all x. (P(x) | ~P(x))\n")
    (workdir / "b.sof").write_text("all x. (Q(x) | ~Q(x))\n")
    code = main(["equiv", str(workdir / "a.sof"), str(workdir / "b.sof"),
                 "--max-size", "2", "--vocab", str(workdir / "v.voc")])
    assert code == 0


def test_translate_audit_structure_counts(workdir, capsys):
    (workdir / "src.sof").write_text(
        "exists2 X1/1. forall2 X2/1. forall x. (~X1(x) | ~X2(x) | E(x,x))\n")
    (workdir / "two.fst").write_text("domain 2\nrel E/2 = {(0,0)}\n")
    code = main(["translate", "--target", "krom-r", str(workdir / "src.sof"),
                 "-o", str(workdir / "tr.sof"),
                 "--audit-structure", str(workdir / "two.fst")])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    counts = json.loads(lines[1])
    assert counts["pi_clause"] > 0 and counts["pi_var_1"] > 0


def test_enumerate_resource_limit_exits_three(workdir, capsys):
    (workdir / "big.voc").write_text("rel E/2\n")
    code = main(["enumerate", "--vocab", str(workdir / "big.voc"),
                 "--size", "5"])
    assert code == 3
    assert "resource limit" in capsys.readouterr().err


def test_missing_file_exits_two(workdir, capsys):
    code = main(["check", str(workdir / "nope.sof"), str(workdir / "cycle3.fst")])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_parse_error_exits_two(workdir, capsys):
    (workdir / "bad.sof").write_text("exists2 R/1. all x. (~ some R)\n")
    code = main(["check", str(workdir / "bad.sof"), str(workdir / "cycle3.fst")])
    assert code == 2


def test_usage_error_exits_64(workdir):
    with pytest.raises(SystemExit) as err:
        main(["not-a-command"])
    assert err.value.code == 64


def test_resource_limit_exits_three(workdir, capsys, monkeypatch):
    monkeypatch.setenv("KROMLAB_LIMIT_VARS", "4")
    (workdir / "big.sof").write_text(
        "forall2 X/2. exists2 Y/2. all x. (X(x,x) | Y(x,x))\n")
    (workdir / "three.fst").write_text("domain 3\nrel E/2 = {}\n")
    monkeypatch.setenv("KROMLAB_LIMIT_ASSIGN", "2")
    code = main(["check", str(workdir / "big.sof"), str(workdir / "three.fst")])
    assert code == 3
    assert "resource limit" in capsys.readouterr().err
