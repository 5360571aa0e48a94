import pytest

from kromlab.structures import Vocabulary, make_structure
from kromlab.textio import parse_formula

EXAMPLE22_TEXT = (
    "exists2 R/2. exists2 Y/2. all x y z. "
    "(~E(x,y)|R(x,y)) & (~E(x,y)|~R(y,z)|R(x,z)) & "
    "(R(x,y)|Y(x,y)) & (~Y(x,y)|~R(x,y)) & (some Y)"
)

VOCAB_E = Vocabulary(relations=(("E", 2),))
VOCAB_P = Vocabulary(relations=(("P", 1),))


@pytest.fixture(scope="session")
def example22():
    return parse_formula(EXAMPLE22_TEXT)


@pytest.fixture(scope="session")
def cycle3():
    return make_structure(VOCAB_E, 3, rels={"E": {(0, 1), (1, 2), (2, 0)}})


def digraph(n, edges):
    return make_structure(VOCAB_E, n, rels={"E": set(edges)})
