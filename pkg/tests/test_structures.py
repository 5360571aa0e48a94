import pytest

from kromlab.errors import ResourceError, StructuralError
from kromlab.structures import (Vocabulary, enumerate_structures,
                                make_structure, natural_order_relations)


def test_duplicate_names_rejected():
    with pytest.raises(StructuralError):
        Vocabulary(constants=("a",), relations=(("a", 1),))


def test_identity_never_declared():
    with pytest.raises(StructuralError):
        Vocabulary(relations=(("=", 2),))


def test_zero_arity_rejected():
    with pytest.raises(StructuralError):
        Vocabulary(relations=(("P", 0),))


def test_ordered_requires_builtins():
    with pytest.raises(StructuralError):
        Vocabulary(relations=(("le", 2),), ordered=True)
    vocab = Vocabulary.make_ordered(relations=(("E", 2),))
    assert vocab.has_relation("le") and vocab.has_relation("succ")
    assert "min" in vocab.constants and "max" in vocab.constants


def test_structure_validation():
    vocab = Vocabulary(relations=(("E", 2),))
    with pytest.raises(StructuralError):
        make_structure(vocab, 2, rels={"E": {(0, 2)}})
    with pytest.raises(StructuralError):
        make_structure(vocab, 0)
    s = make_structure(vocab, 2, rels={"E": {(0, 1)}})
    assert s.rel("E") == frozenset({(0, 1)})


def test_ordered_structure_natural_order():
    vocab = Vocabulary.make_ordered()
    rels = natural_order_relations(3)
    s = make_structure(vocab, 3, consts={"min": 0, "max": 2}, rels=rels)
    assert (0, 1) in s.rel("succ") and (0, 2) not in s.rel("succ")
    # broken succ is rejected
    bad = dict(rels)
    bad["succ"] = frozenset({(0, 2)})
    with pytest.raises(StructuralError):
        make_structure(vocab, 3, consts={"min": 0, "max": 2}, rels=bad)


def test_ordered_single_element():
    vocab = Vocabulary.make_ordered()
    s = make_structure(vocab, 1, consts={"min": 0, "max": 0},
                       rels=natural_order_relations(1))
    assert s.rel("succ") == frozenset()
    assert s.const("min") == s.const("max") == 0


def test_enumerate_counts():
    assert len(list(enumerate_structures(Vocabulary(relations=(("E", 2),)), 2))) == 16
    assert len(list(enumerate_structures(Vocabulary(relations=(("P", 1),)), 1))) == 2
    vocab = Vocabulary(constants=("c",), relations=(("E", 2),))
    assert len(list(enumerate_structures(vocab, 2))) == 32


def test_enumerate_deterministic_and_unique():
    vocab = Vocabulary(relations=(("P", 1),))
    first = list(enumerate_structures(vocab, 2))
    second = list(enumerate_structures(vocab, 2))
    assert first == second
    assert len(set(first)) == len(first)


def test_enumerate_budget():
    vocab = Vocabulary(relations=(("E", 2),))
    with pytest.raises(ResourceError) as err:
        list(enumerate_structures(vocab, 3, budget=100))
    assert err.value.needed == 512


def test_induced_substructure():
    vocab = Vocabulary(relations=(("E", 2),))
    s = make_structure(vocab, 3, rels={"E": {(0, 1), (1, 2), (2, 0)}})
    sub = s.induced_substructure((0, 1))
    assert sub.n == 2
    assert sub.rel("E") == frozenset({(0, 1)})
    with pytest.raises(StructuralError):
        s.induced_substructure(())


def test_substructure_keeps_constants_inside():
    vocab = Vocabulary(constants=("c",), relations=(("P", 1),))
    s = make_structure(vocab, 2, consts={"c": 1}, rels={"P": {(0,)}})
    with pytest.raises(StructuralError):
        s.induced_substructure((0,))
    sub = s.induced_substructure((1, 0))
    assert sub.const("c") == 0
    assert sub.rel("P") == frozenset({(1,)})
