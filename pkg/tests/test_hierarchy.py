import pytest

from kromlab.errors import ParseError, StructuralError
from kromlab.evaluator import check_model, eval_qbf_bruteforce, eval_tree
from kromlab.hierarchy import (IntermediateFormula, PrefixedDnfQbf,
                               build_interpretation, decode_qbf, encode_qbf,
                               ground_intermediate, interpret_structure,
                               negate_and_skolemize, parse_qbf, phi_formula,
                               print_qbf, small_model_patch,
                               one_element_disjunct, translate_sigma_k,
                               theta_display_tree, apply_interpretation)
from kromlab.logic import (Atom, ForAllSO, FragmentKind, FragmentTag,
                           GuardedExists, SOQuant, classify,
                           so_literal_count, v)
from kromlab.structures import Vocabulary, enumerate_structures
from kromlab.textio import parse_formula

SIGMA4_TEXT = "4\ne x1\na x2\ne x3\na x4\nt x1 -x2\nt x2 -x4\nt x3 x4\n"

FIXED_SOURCE = "exists2 X1/1. forall2 X2/1. forall x. (~X1(x) | ~X2(x) | E(x,x))"
VOCAB_E = Vocabulary(relations=(("E", 2),))


# --- PrefixedDnfQbf and its text format -----------------------------------------


def test_parse_print_roundtrip():
    q = parse_qbf(SIGMA4_TEXT)
    assert parse_qbf(print_qbf(q)) == q
    assert q.k == 4


def test_parse_qbf_errors():
    with pytest.raises(ParseError):
        parse_qbf("")
    with pytest.raises(ParseError):
        parse_qbf("1\nq x1\nt x1\n")
    with pytest.raises(ParseError):
        parse_qbf("1\ne x1\nt x2\n")  # unbound term variable
    with pytest.raises(ParseError):
        parse_qbf("2\ne x1\ne x2\nt x1\n")  # blocks must alternate


# --- encode / decode --------------------------------------------------------------


def test_encode_sigma4_layout():
    q = parse_qbf(SIGMA4_TEXT)
    enc = encode_qbf(q)
    s = enc.structure
    assert s.n == 7
    assert s.rel("Clause") == frozenset({(0,), (1,), (2,)})
    assert s.rel("Var1") == frozenset({(3,)})
    assert s.rel("Var4") == frozenset({(6,)})
    # 0-indexed image of the occurrence table, with variables relocated
    # after the clause elements
    assert s.rel("Pos") == frozenset({(0, 3), (1, 4), (2, 5), (2, 6)})
    assert s.rel("Neg") == frozenset({(0, 4), (1, 6)})


def test_encode_single_positive_term():
    q = PrefixedDnfQbf((("exists", ("x",)),), ((("x", True),),))
    enc = encode_qbf(q)
    assert enc.structure.n == 2
    assert enc.structure.rel("Clause") == frozenset({(0,)})
    assert enc.structure.rel("Var1") == frozenset({(1,)})
    assert enc.structure.rel("Pos") == frozenset({(0, 1)})


def test_encode_pads_to_two_elements():
    q = PrefixedDnfQbf((("exists", ()),), ((),))
    enc = encode_qbf(q)
    assert enc.structure.n == 2


def test_encode_keeps_unused_variables():
    q = PrefixedDnfQbf((("exists", ("x", "y")),), ((("x", True),),))
    enc = encode_qbf(q)
    assert len(enc.structure.rel("Var1")) == 2


def test_encode_rejects_non_dnf():
    from kromlab.evaluator import GroundQbf
    with pytest.raises(StructuralError):
        encode_qbf(GroundQbf((("exists", (1,)),), ((1,),)))


def test_decode_roundtrip_up_to_renaming():
    q = parse_qbf(SIGMA4_TEXT)
    d = decode_qbf(encode_qbf(q))
    assert encode_qbf(d).structure == encode_qbf(q).structure
    assert d.blocks[0][0] == "exists" and d.k == 4


def test_pos_neg_overlap_is_faithful():
    q = PrefixedDnfQbf((("exists", ("x",)),),
                       ((("x", True), ("x", False)),))
    enc = encode_qbf(q)
    assert enc.structure.rel("Pos") == enc.structure.rel("Neg") != frozenset()


# --- phi_formula ------------------------------------------------------------------


def test_phi_classification():
    for k in (1, 2, 3, 4):
        phi = phi_formula(k)
        tag = classify(phi)
        expected = (FragmentKind.SIGMA_KROM_R if k % 2 == 0
                    else FragmentKind.PI_KROM_R)
        assert tag.kind is expected and tag.k == k + 1
        assert any(isinstance(l, GuardedExists)
                   for cl in phi.matrix for l in cl.literals)


def test_phi_trivial_satisfiable_encoding():
    q = PrefixedDnfQbf((("exists", ("x",)), ("forall", ("y",))),
                       ((("x", True),),))
    assert check_model(phi_formula(2), encode_qbf(q).structure) is True


def test_phi_agrees_with_qbf_truth_small():
    cases = [
        ("2\ne x1\na x2\nt x1\nt -x2\n", None),
        ("2\ne x1\na x2\nt x1 -x2\nt -x1 x2\n", None),
        ("1\na x1\nt x1\nt -x1\n", None),
        ("2\ne x1 x2\na y1\nt x1 -y1\nt x2 y1\n", None),
    ]
    for text, _ in cases:
        q = parse_qbf(text)
        g, _ = q.to_ground()
        expected = eval_qbf_bruteforce(g)
        phi = phi_formula(q.k, first_quant=q.blocks[0][0])
        assert check_model(phi, encode_qbf(q).structure) is expected, text


# --- negate_and_skolemize -------------------------------------------------------


def _fixed_intermediate():
    return negate_and_skolemize(parse_formula(FIXED_SOURCE))


def test_intermediate_structure():
    inter = _fixed_intermediate()
    assert inter.k == 2
    assert inter.skolem is not None
    assert inter.so_prefix[-1].quant == "forall"
    assert inter.m == 4 and inter.x_len == 2 and inter.g == 1


def test_intermediate_equivalent_to_source():
    inter = _fixed_intermediate()
    src = parse_formula(FIXED_SOURCE)
    for n in (1, 2):
        for s in enumerate_structures(VOCAB_E, n):
            assert eval_tree(src, s) == eval_tree(inter.to_tree(), s)


def test_intermediate_quantifier_free_body():
    # a ground body negates to a quantifier-free formula: no Skolem relation
    src = parse_formula("exists2 X1/1. forall2 X2/1. X1(k) | X2(k)")
    inter = negate_and_skolemize(src)
    assert inter.skolem is None and inter.x_len == 0
    assert inter.m == 2
    vocab = src.vocabulary
    for n in (1, 2):
        for s in enumerate_structures(vocab, n):
            assert eval_tree(src, s) == eval_tree(inter.to_tree(), s)


def test_negate_and_skolemize_pi_variant():
    src = parse_formula("forall2 X1/1. forall x. (X1(x) | E(x,x))")
    inter = negate_and_skolemize(src)
    assert inter.k == 1
    assert inter.so_prefix[0].quant == "forall"
    for n in (1, 2):
        for s in enumerate_structures(VOCAB_E, n):
            assert eval_tree(src, s) == eval_tree(inter.to_tree(), s)


def test_negate_and_skolemize_rejects_existential_end():
    src = parse_formula("exists2 X1/1. forall x. (X1(x))")
    with pytest.raises(StructuralError):
        negate_and_skolemize(src)


# --- build_interpretation --------------------------------------------------------


def test_width_formula_example():
    # |x| = 2, m = 3, g = 2, k = 2  ->  d = 3 + max(6, 5) = 9
    inter = IntermediateFormula(
        VOCAB_E,
        (SOQuant("exists", "X1", 2), SOQuant("forall", "X2", 1)),
        None, ("a", "b"), (), (),
        ((Atom("X1", (v("a"), v("b")), True),),) * 3,
        2)
    interp = build_interpretation(inter)
    assert interp.width == 9


def test_width_fixed_source():
    interp = build_interpretation(_fixed_intermediate())
    inter = interp.intermediate
    assert interp.width == 3 + max(inter.x_len + inter.m + 1,
                                   inter.g + inter.k + 1) == 10


def test_interpretation_formulas_quantifier_free():
    from kromlab.logic import Exists, ForAll, ExistsSO
    from kromlab.hierarchy import _walk
    interp = build_interpretation(_fixed_intermediate())
    for node in (interp.pi_uni, interp.pi_clause, interp.pi_pos,
                 interp.pi_neg) + interp.pi_var:
        assert not any(isinstance(x, (Exists, ForAll, ExistsSO, ForAllSO))
                       for x in _walk(node))


def test_interpreted_structure_matches_independent_grounding():
    interp = build_interpretation(_fixed_intermediate())
    inter = interp.intermediate
    structures = list(enumerate_structures(VOCAB_E, 2))[:4]
    for s in structures:
        psi = ground_intermediate(inter, s)
        decoded = interpret_structure(interp, s)
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


def test_ground_intermediate_truth_matches_tree():
    inter = _fixed_intermediate()
    for n in (1, 2):
        for s in enumerate_structures(VOCAB_E, n):
            psi = ground_intermediate(inter, s)
            g, _ = psi.qbf.to_ground()
            assert eval_qbf_bruteforce(g) == eval_tree(inter.to_tree(), s)


# --- apply_interpretation and translation ----------------------------------------


def test_apply_arity_bookkeeping():
    interp = build_interpretation(_fixed_intermediate())
    theta = apply_interpretation(phi_formula(2), interp)
    assert all(q.arity == interp.width for q in theta.so_prefix)
    assert classify(theta) == FragmentTag(FragmentKind.SIGMA_KROM_R, 3)


def test_apply_keeps_krom_bound():
    interp = build_interpretation(_fixed_intermediate())
    theta = apply_interpretation(phi_formula(2), interp)
    assert max(so_literal_count(cl, theta.so_names)
               for cl in theta.matrix) <= 2


def test_theta_display_tree_shape():
    interp = build_interpretation(_fixed_intermediate())
    tree = theta_display_tree(phi_formula(2), interp)
    from kromlab.logic import ExistsSO as E2
    assert isinstance(tree.root, E2) and tree.root.arity == interp.width


def test_one_element_disjunct_agrees_with_bruteforce():
    src = parse_formula(FIXED_SOURCE)
    delta = one_element_disjunct(src)
    patch = small_model_patch(src, delta)
    for s in enumerate_structures(VOCAB_E, 1):
        assert check_model(patch, s) == eval_tree(src, s)
    # and the patch is never satisfied beyond one element
    for s in enumerate_structures(VOCAB_E, 2):
        assert check_model(patch, s) is False


def test_translate_pipeline():
    src = parse_formula(FIXED_SOURCE)
    translated = translate_sigma_k(src)
    tag = classify(translated)
    assert tag.kind is FragmentKind.SIGMA_KROM_R and tag.k == 3
    audit = translated.audit()
    assert audit["d"] == 10 and audit["m"] == 4 and audit["k"] == 2
    for s in enumerate_structures(VOCAB_E, 1):
        assert check_model(translated, s) == eval_tree(src, s)


def test_translate_empty_vocabulary_source():
    src = parse_formula("exists2 X1/1. forall2 X2/1. forall x. (X1(x) | X2(x))")
    translated = translate_sigma_k(src)
    for s in enumerate_structures(Vocabulary(), 1):
        assert check_model(translated, s) == eval_tree(src, s)
