"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as the
criteria complete.  Corpora are seeded and deterministic.
"""

import json
import pathlib
import random
import time
from functools import lru_cache
from itertools import product

from kromlab.evaluator import (RouteStats, check_model, eval_qbf_bruteforce,
                               eval_tree, ground)
from kromlab.harness import (FormulaProfile, PrenexProfile, VOCAB_E, VOCAB_P,
                             equiv_test, random_digraph, random_formula,
                             random_prenex_fo, scc_strong_connectivity)
from kromlab.hierarchy import (PrefixedDnfQbf, build_interpretation,
                               encode_qbf, ground_intermediate,
                               interpret_structure, negate_and_skolemize,
                               one_element_disjunct, parse_qbf, phi_formula,
                               small_model_patch, translate_sigma_k)
from kromlab.logic import (Atom, Conj, Disj, Exists, ExistsSO, ForAll,
                           ForAllSO, FragmentKind, GuardedExists, Lit,
                           TreeFormula, classify, v)
from kromlab.structures import enumerate_structures
from kromlab.textio import parse_formula

from conftest import EXAMPLE22_TEXT

GOLDEN = json.loads(
    (pathlib.Path(__file__).parent / "golden" / "oracle_values.json").read_text())

SIGMA4_TEXT = "4\ne x1\na x2\ne x3\na x4\nt x1 -x2\nt x2 -x4\nt x3 x4\n"
FIXED_SIGMA2_SOURCE = (
    "exists2 X1/1. forall2 X2/1. forall x. (~X1(x) | ~X2(x) | E(x,x))")

ARITY_MIX = ((1,), (2,), (1, 2))


def _report(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS  [{detail}]")


@lru_cache(maxsize=1)
def corpus_pi11():
    out = []
    for i in range(250):
        profile = FormulaProfile("pi1-krom-r", VOCAB_P, clause_count=3,
                                 so_arities=ARITY_MIX[i % 3], guarded=1)
        out.append(random_formula(profile, i))
    for i in range(250):
        profile = FormulaProfile("pi1-krom-r", VOCAB_E, clause_count=3,
                                 so_arities=ARITY_MIX[i % 3], guarded=1)
        out.append(random_formula(profile, 10_000 + i))
    return tuple(out)


@lru_cache(maxsize=1)
def corpus_sigma11():
    out = []
    for i in range(240):
        profile = FormulaProfile("sigma1-krom-r", VOCAB_P, clause_count=3,
                                 so_arities=(1, 2), guarded=1 + i % 2)
        out.append(random_formula(profile, i))
    for i in range(60):
        profile = FormulaProfile("sigma1-krom-r", VOCAB_E, clause_count=3,
                                 so_arities=(1, 2), guarded=1 + i % 2)
        out.append(random_formula(profile, 20_000 + i))
    return tuple(out)


@lru_cache(maxsize=1)
def corpus_ekrom():
    out = []
    for i in range(150):
        profile = FormulaProfile("ekrom", VOCAB_P, clause_count=3,
                                 so_arities=(1, 1) if i % 2 else (1, 2))
        out.append(random_formula(profile, i))
    for i in range(50):
        profile = FormulaProfile("ekrom", VOCAB_E, clause_count=3,
                                 so_arities=(1, 1))
        out.append(random_formula(profile, 30_000 + i))
    return tuple(out)


@lru_cache(maxsize=1)
def corpus_prenex():
    out = []
    for i in range(300):
        out.append(random_prenex_fo(PrenexProfile(clause_count=3), i))
    return tuple(out)


def test_criterion_1_example22_fidelity():
    started = time.time()
    formula = parse_formula(EXAMPLE22_TEXT)
    mismatches = 0
    tested = 0

    # the one-node verdicts are fixed by brute force first
    for structure in enumerate_structures(VOCAB_E, 1):
        brute = eval_tree(formula.to_tree(), structure)
        key = ("example22_one_node_self_loop" if structure.rel("E")
               else "example22_one_node_no_edges")
        assert brute is GOLDEN[key]
        tested += 1
        if check_model(formula, structure) is not brute:
            mismatches += 1

    for n in (2, 3):
        for structure in enumerate_structures(VOCAB_E, n):
            tested += 1
            expected = not scc_strong_connectivity(structure)
            if check_model(formula, structure) is not expected:
                mismatches += 1

    for seed in range(1000):
        structure = random_digraph(4, seed)
        tested += 1
        expected = not scc_strong_connectivity(structure)
        if check_model(formula, structure) is not expected:
            mismatches += 1

    elapsed = time.time() - started
    assert mismatches == 0
    assert elapsed < 60
    _report(1, f"{tested} digraphs, 0 mismatches, {elapsed:.1f}s")


def test_criterion_2_drop_universal_soundness():
    from kromlab.transforms import drop_innermost_universal

    started = time.time()
    for i, formula in enumerate(corpus_pi11()):
        out = drop_innermost_universal(formula)
        assert classify(out).kind is FragmentKind.FO_UNIVERSAL_CNF, i
        report = equiv_test(formula, out, 3)
        assert report.equivalent, f"formula {i}: {report}"
    elapsed = time.time() - started
    assert elapsed < 300
    _report(2, f"500 formulas, 0 counterexamples, {elapsed:.1f}s")


def test_criterion_3_expand_soundness():
    from kromlab.transforms import expand_exists_r

    started = time.time()
    for i, formula in enumerate(corpus_sigma11()):
        disjuncts = expand_exists_r(formula)
        for d in disjuncts:
            assert not any(isinstance(l, GuardedExists)
                           for cl in d.matrix for l in cl.literals), i
            tag = classify(d)
            assert tag.kind in (FragmentKind.SIGMA_KROM,
                                FragmentKind.FO_UNIVERSAL_CNF), (i, tag)
        report = equiv_test(formula, tuple(disjuncts), 3)
        assert report.equivalent, f"formula {i}: {report}"
    elapsed = time.time() - started
    _report(3, f"300 formulas, 0 counterexamples, {elapsed:.1f}s")


def test_criterion_4_skolemization_soundness():
    from kromlab.transforms import skolem_parts, skolemize_fo

    started = time.time()
    for i, prenex in enumerate(corpus_prenex()):
        out = skolemize_fo(prenex)
        parts = skolem_parts(prenex)
        if parts is None:
            assert out == prenex.to_tree(), i
        else:
            root = out.root
            assert isinstance(root, ExistsSO) and root.arity == parts.arity, i
            assert isinstance(root.body, Conj) and len(root.body.parts) == 3, i
            phi1 = root.body.parts[0]
            while isinstance(phi1, (ForAll, Exists)):
                phi1 = phi1.body
            assert isinstance(phi1, Lit) and phi1.lit.pred == parts.y_name, i
        report = equiv_test(prenex.to_tree(), out, 3)
        assert report.equivalent, f"formula {i}: {report}"
    elapsed = time.time() - started
    _report(4, f"300 prenex formulas, 0 counterexamples, {elapsed:.1f}s")


def _random_sigma2_dnf(seed):
    rng = random.Random(seed)
    nvars = rng.randint(1, 4)
    names = [f"x{i}" for i in range(nvars)]
    split = rng.randint(0, nvars)
    blocks = (("exists", tuple(names[:split])), ("forall", tuple(names[split:])))
    terms = []
    for _ in range(rng.randint(1, 3)):
        size = rng.randint(1, min(3, nvars))
        chosen = rng.sample(names, size)
        terms.append(tuple((n, rng.random() < 0.5) for n in chosen))
    return PrefixedDnfQbf(blocks, tuple(terms))


def test_criterion_5_qbf_encoding_fidelity():
    started = time.time()

    # (a) the four-block example: the 16-row oracle fixes the value (it is
    # true: x1=1, x3=1 is a winning strategy) and the fixed evaluation
    # formula agrees on the encoding
    qbf = parse_qbf(SIGMA4_TEXT)
    g, _ = qbf.to_ground()
    oracle = eval_qbf_bruteforce(g)
    assert oracle is GOLDEN["sigma4_dnf_example"]
    assert check_model(phi_formula(4), encode_qbf(qbf).structure) is oracle

    # (b) 200 random two-block DNF QBFs
    phi2 = phi_formula(2)
    for seed in range(200):
        q = _random_sigma2_dnf(seed)
        ground_q, _ = q.to_ground()
        expected = eval_qbf_bruteforce(ground_q)
        got = check_model(phi2, encode_qbf(q).structure)
        assert got is expected, seed
    elapsed = time.time() - started
    assert elapsed < 120
    _report(5, f"paper example + 200 QBFs, 0 mismatches, {elapsed:.1f}s")


def _random_sigma2_source(seed):
    """Small prenex sources exists X1 forall X2 <fo body> over {E/2}."""
    rng = random.Random(seed)
    arity = 1 + (seed % 2)
    prefix_shape = rng.choice((("forall",), ("forall", "forall"),
                               ("forall", "exists")))
    fo_vars = [f"x{i}" for i in range(len(prefix_shape))]

    def term():
        return v(rng.choice(fo_vars))

    def literal():
        kind = rng.random()
        if kind < 0.4:
            return Atom("E", (term(), term()), rng.random() < 0.5)
        name = rng.choice(("X1", "X2"))
        return Atom(name, tuple(term() for _ in range(arity)),
                    rng.random() < 0.5)

    clauses = [Disj(tuple(Lit(literal())
                          for _ in range(rng.randint(1, 2))))
               for _ in range(rng.randint(1, 2))]
    body = Conj(tuple(clauses))
    for quant, name in zip(reversed(prefix_shape), reversed(fo_vars)):
        body = (ForAll if quant == "forall" else Exists)(name, body)
    root = ExistsSO("X1", arity, ForAllSO("X2", arity, body))
    return TreeFormula(VOCAB_E, root)


def test_criterion_6_interpretation_components():
    started = time.time()

    # (i) width audit over 50 pipeline runs
    for seed in range(50):
        source = _random_sigma2_source(seed)
        translated = translate_sigma_k(source)
        inter = translated.interpretation.intermediate
        expected = 3 + max(inter.x_len + inter.m + 1, inter.g + inter.k + 1)
        assert translated.interpretation.width == expected, seed
        assert all(q.arity == translated.interpretation.width
                   for q in translated.theta.so_prefix), seed

    # (ii) the interpreted structure equals the independently built ground
    # QBF's encoding, on every two-element structure over {E/2}
    source = parse_formula(FIXED_SIGMA2_SOURCE)
    inter = negate_and_skolemize(source)
    interp = build_interpretation(inter)
    assert 2 ** interp.width <= 2 ** 13
    for structure in enumerate_structures(VOCAB_E, 2):
        psi = ground_intermediate(inter, structure)
        decoded = interpret_structure(interp, structure)
        assert decoded.clauses == frozenset(psi.term_ids)
        expected_vars = frozenset(
            ((var, t), min(inter.block_of(var), inter.k))
            for _, (var, t) in psi.atom_of)
        assert decoded.variables == expected_vars
        pos, neg = set(), set()
        for tid, term in zip(psi.term_ids, psi.qbf.terms):
            for name, positive in term:
                (pos if positive else neg).add((tid, psi.atom_identity(name)))
        assert decoded.pos == frozenset(pos)
        assert decoded.neg == frozenset(neg)

    # (iii) the one-element disjunct agrees with brute force
    delta = one_element_disjunct(source)
    patch = small_model_patch(source, delta)
    for structure in enumerate_structures(VOCAB_E, 1):
        assert check_model(patch, structure) == eval_tree(source, structure)

    # (iv) the final output classifies into the sanctioned shape
    translated = translate_sigma_k(source)
    tag = classify(translated)
    assert tag.kind is FragmentKind.SIGMA_KROM_R and tag.k == 3

    elapsed = time.time() - started
    assert elapsed < 600
    _report(6, f"50 audits + 16 structure interpretations, {elapsed:.1f}s")


def test_criterion_7_ekrom_suite():
    started = time.time()
    for i, formula in enumerate(corpus_ekrom()):
        assert classify(formula).kind is FragmentKind.SO_EKROM, i
        vocab = formula.vocabulary

        # (a) agreement with grounding plus brute force on n <= 2
        for n in (1, 2):
            for structure in enumerate_structures(vocab, n):
                got = check_model(formula, structure)
                qbf, _ = ground(formula, structure)
                assert got == eval_qbf_bruteforce(qbf), (i, n)

        # (b) substructure closure on every satisfying model at n <= 3
        for n in (1, 2, 3):
            for structure in enumerate_structures(vocab, n):
                if not check_model(formula, structure):
                    continue
                for size in range(1, n):
                    for keep in product(range(n), repeat=size):
                        if len(set(keep)) != size:
                            continue
                        sub = structure.induced_substructure(keep)
                        assert check_model(formula, sub), (i, n, keep)
    elapsed = time.time() - started
    _report(7, f"200 formulas, closure and agreement hold, {elapsed:.1f}s")


def test_criterion_8_polynomial_route():
    formula = parse_formula(EXAMPLE22_TEXT)
    started = time.time()
    for seed in (11, 12, 13):
        structure = random_digraph(20, seed)
        stats = RouteStats()
        got = check_model(formula, structure, stats=stats)
        assert got == (not scc_strong_connectivity(structure)), seed
        assert stats.sigma11 == 1
        assert stats.tree == 0 and stats.qbf_bruteforce == 0
    elapsed = time.time() - started
    assert elapsed < 10
    _report(8, f"3 digraphs at n=20 via 2-SAT route, {elapsed:.1f}s")


def test_criterion_9_route_agreement():
    started = time.time()
    formulas = corpus_pi11() + corpus_sigma11() + corpus_ekrom()
    disagreements = 0
    checked = 0
    for formula in formulas:
        vocab = formula.vocabulary
        for n in (1, 2):
            for structure in enumerate_structures(vocab, n):
                checked += 1
                specialized = check_model(formula, structure)
                tree = eval_tree(formula.to_tree(), structure)
                qbf, _ = ground(formula, structure)
                brute = eval_qbf_bruteforce(qbf)
                if not specialized == tree == brute:
                    disagreements += 1
    elapsed = time.time() - started
    assert disagreements == 0
    _report(9, f"{checked} evaluations across 3 routes, 0 disagreements, "
               f"{elapsed:.1f}s")
