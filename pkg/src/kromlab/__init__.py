"""kromlab: second-order Krom logic over finite structures.

Parsing, grounding, fragment-aware model checking, the constructive
formula translations between Krom fragments, and an exhaustive
small-structure equivalence harness.
"""

from .errors import (KromlabError, ParseError, ResourceError, StructuralError,
                     UnsupportedFormatError)
from .evaluator import (EvalConfig, GroundAtomIndex, GroundQbf, RouteStats,
                        check_model, eval_2sat, eval_alternating,
                        eval_qbf_bruteforce, eval_tree, ground)
from .harness import (EquivReport, FormulaProfile, PrenexProfile, equiv_test,
                      random_digraph, random_formula, random_prenex_fo,
                      scc_strong_connectivity)
from .hierarchy import (Interpretation, IntermediateFormula, PrefixedDnfQbf,
                        QbfStructureEncoding, TranslatedFormula,
                        build_interpretation, decode_qbf, encode_qbf,
                        ground_intermediate, interpret_structure,
                        negate_and_skolemize, parse_qbf, phi_formula,
                        print_qbf, translate_sigma_k)
from .logic import (Atom, Clause, ClausalFormula, FragmentKind, FragmentTag,
                    Falsum, GuardedExists, SOQuant, Term, TreeFormula,
                    TupleEq, classify, substitute)
from .structures import (FiniteStructure, Vocabulary, enumerate_structures,
                         make_structure)
from .textio import (emit_qdimacs, parse_formula, parse_structure,
                     parse_vocabulary, print_formula, print_structure)
from .transforms import (PrenexFO, RewriteTrace, drop_innermost_universal,
                         expand_exists_r, prenex_normal_form, skolemize_fo,
                         strip_universal_blocks)

__version__ = "0.1.0"
