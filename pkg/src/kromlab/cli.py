"""Command-line entry point.

Exit codes: 0 success (for `check`: formula true; for `equiv`:
equivalent), 1 negative verdict (`check` false, `equiv` counterexample),
2 input or structural errors, 3 resource-limit errors, 64 usage errors.
Diagnostics go to stderr only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import KromlabError, ResourceError
from .evaluator import EvalConfig, check_model, ground
from .harness import equiv_test
from .hierarchy import encode_qbf, parse_qbf, phi_formula, translate_sigma_k
from .logic import TreeFormula, classify
from .structures import enumerate_structures
from .textio import (emit_qdimacs, parse_formula, parse_structure,
                     parse_vocabulary, print_formula, print_structure)
from .transforms import (RewriteTrace, drop_innermost_universal,
                         expand_exists_r, skolemize_fo, prenex_normal_form,
                         strip_universal_blocks)

USAGE_EXIT = 64
ERROR_EXIT = 2
RESOURCE_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _config_from_env() -> EvalConfig:
    config = EvalConfig()
    limit_vars = os.environ.get("KROMLAB_LIMIT_VARS")
    if limit_vars:
        config.max_qbf_vars = int(limit_vars)
    limit_assign = os.environ.get("KROMLAB_LIMIT_ASSIGN")
    if limit_assign:
        config.max_block_assignments = int(limit_assign)
    return config


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        return handle.read()


def _write(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


def build_parser() -> _Parser:
    parser = _Parser(prog="kromlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="evaluate a formula on a structure")
    p.add_argument("formula")
    p.add_argument("structure")

    p = sub.add_parser("ground", help="write the QDIMACS grounding")
    p.add_argument("formula")
    p.add_argument("structure")
    p.add_argument("-o", "--output")

    p = sub.add_parser("transform", help="apply a rewrite rule")
    p.add_argument("--rule", required=True,
                   choices=("drop-universal", "strip-universal",
                            "expand-exists", "skolemize"))
    p.add_argument("formula")
    p.add_argument("-o", "--output")
    p.add_argument("--trace", action="store_true")

    p = sub.add_parser("translate", help="translate into the Krom fragment")
    p.add_argument("--target", required=True, choices=("krom-r",))
    p.add_argument("formula")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--emit-theta", metavar="PATH")
    p.add_argument("--audit-structure", metavar="FST",
                   help="also count tuples satisfying each defining formula")

    p = sub.add_parser("encode-qbf", help="encode a DNF QBF as a structure")
    p.add_argument("qbf")
    p.add_argument("-o", "--output", help="basename for .fst/.sof outputs")

    p = sub.add_parser("equiv", help="exhaustive small-structure equivalence")
    p.add_argument("lhs")
    p.add_argument("rhs")
    p.add_argument("--max-size", type=int, default=3)
    p.add_argument("--vocab")

    p = sub.add_parser("enumerate", help="stream all structures of a size")
    p.add_argument("--vocab", required=True)
    p.add_argument("--size", type=int, required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _config_from_env()
    try:
        return _dispatch(args, config)
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return RESOURCE_EXIT
    except KromlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR_EXIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR_EXIT


def _dispatch(args, config) -> int:
    if args.command == "check":
        formula = parse_formula(_read(args.formula))
        structure = parse_structure(_read(args.structure))
        verdict = check_model(formula, structure, config)
        print("true" if verdict else "false")
        return 0 if verdict else 1

    if args.command == "ground":
        formula = parse_formula(_read(args.formula))
        structure = parse_structure(_read(args.structure))
        qbf, index = ground(formula, structure)
        _write(args.output, emit_qdimacs(qbf, index))
        return 0

    if args.command == "transform":
        return _transform(args)

    if args.command == "translate":
        return _translate(args, config)

    if args.command == "encode-qbf":
        qbf = parse_qbf(_read(args.qbf))
        enc = encode_qbf(qbf)
        base = args.output or os.path.splitext(args.qbf)[0]
        _write(base + ".fst", print_structure(enc.structure))
        phi = phi_formula(qbf.k, first_quant=qbf.blocks[0][0])
        _write(base + ".sof", print_formula(phi) + "\n")
        return 0

    if args.command == "equiv":
        lhs = parse_formula(_read(args.lhs))
        rhs = parse_formula(_read(args.rhs))
        vocab = parse_vocabulary(_read(args.vocab)) if args.vocab else None
        report = equiv_test(lhs, rhs, args.max_size, vocab, config)
        print(report)
        if report.equivalent:
            return 0
        sys.stdout.write(print_structure(report.counterexample))
        return 1

    if args.command == "enumerate":
        vocab = parse_vocabulary(_read(args.vocab))
        first = True
        for structure in enumerate_structures(vocab, args.size):
            if not first:
                print()
            sys.stdout.write(print_structure(structure))
            first = False
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def _transform(args) -> int:
    formula = parse_formula(_read(args.formula))
    trace = RewriteTrace() if args.trace else None
    if args.rule == "skolemize":
        if not isinstance(formula, TreeFormula):
            formula = formula.to_tree()
        result = skolemize_fo(prenex_normal_form(formula))
    else:
        if isinstance(formula, TreeFormula):
            raise KromlabError(f"rule {args.rule} needs a prefixed-clausal formula")
        if args.rule == "drop-universal":
            result = drop_innermost_universal(formula, trace)
        elif args.rule == "strip-universal":
            result = strip_universal_blocks(formula, trace)
        else:
            result = expand_exists_r(formula, trace)
            result = result[0] if len(result) == 1 else tuple(result)
    _write(args.output, print_formula(result) + "\n")
    if trace is not None and trace.steps:
        print(trace.format(), file=sys.stderr)
    return 0


def _translate(args, config) -> int:
    formula = parse_formula(_read(args.formula))
    if not isinstance(formula, TreeFormula):
        formula = formula.to_tree()
    translated = translate_sigma_k(formula, config)
    _write(args.output, print_formula(translated) + "\n")
    if args.emit_theta:
        _write(args.emit_theta, print_formula(translated.theta_display) + "\n")
    audit = translated.audit()
    audit["classify"] = str(classify(translated))
    print(json.dumps(audit))
    if args.audit_structure:
        structure = parse_structure(_read(args.audit_structure))
        counts = _pi_tuple_counts(translated, structure)
        print(json.dumps(counts))
    return 0


def _pi_tuple_counts(translated, structure) -> dict:
    from itertools import product

    from .evaluator import eval_tree
    from .logic import TreeFormula as TF

    interp = translated.interpretation
    vocab = interp.intermediate.vocabulary
    counts = {"pi_clause": 0}
    counts.update({f"pi_var_{h}": 0 for h in range(1, interp.k + 1)})
    for tup in product(range(structure.n), repeat=interp.width):
        env1 = dict(zip(interp.v1, tup))
        if eval_tree(TF(vocab, interp.pi_clause), structure, env=env1):
            counts["pi_clause"] += 1
        env2 = dict(zip(interp.v2, tup))
        for h in range(1, interp.k + 1):
            if eval_tree(TF(vocab, interp.pi_var[h - 1]), structure, env=env2):
                counts[f"pi_var_{h}"] += 1
    return counts


def run():  # console-script entry point
    raise SystemExit(main())


if __name__ == "__main__":
    run()
