"""Concrete syntax: formula files (.sof), structure files (.fst),
vocabulary files (.voc), and the QDIMACS emitter.

Formula grammar (prefixed-clausal form, plus a general expression form):

    formula  := ['ex' IDENT+ '.'] (quant IDENT '/' INT '.')* 'all' IDENT+ '.'
                clause ('&' clause)*
              | generalExpr
    quant    := 'exists2' | 'forall2'
    clause   := '(' lit ('|' lit)* ')'
    lit      := ['~'] atom | 'some' IDENT | 'false'
    atom     := IDENT '(' term (',' term)* ')' | term '=' term
    term     := IDENT

The optional ``ex`` prefix carries first-order existential variables in
front of the second-order prefix (the shape guard expansion produces).
General expressions use ``exists``/``forall`` for first-order quantifiers,
``exists2 R/k``/``forall2 R/k`` for second-order ones, the connectives
``~ & | -> <->`` (the last two are sugar, normalized at parse time), and
``true``/``false``.  A negated guard ``~ some R`` is rejected everywhere.
"""

from __future__ import annotations

import re

from .errors import ParseError, StructuralError, UnsupportedFormatError
from .logic import (Atom, Clause, ClausalFormula, Conj, Disj, Exists, ExistsSO,
                    FALSE_NODE, FALSUM, Falsum, ForAll, ForAllSO, GuardedExists,
                    Lit, Neg, Node, SOQuant, Term, TRUE_NODE, TreeFormula,
                    TupleEq, c, negated, v)
from .structures import FiniteStructure, Vocabulary, make_structure, natural_order_relations

KEYWORDS = {"exists2", "forall2", "exists", "forall", "ex", "all", "some",
            "false", "true"}

_TOKEN_RE = re.compile(r"\s*(<->|->|!=|[A-Za-z_][A-Za-z0-9_]*|[0-9]+|[(),./=&|~])")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ParseError(f"unexpected character {text[pos:].strip()[0]!r}")
            break
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _TokenStream:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead=0):
        j = self.i + ahead
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self):
        if self.i >= len(self.tokens):
            raise ParseError("unexpected end of input")
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, tok):
        got = self.next()
        if got != tok:
            raise ParseError(f"expected {tok!r}, got {got!r}")
        return got

    def at_end(self):
        return self.i >= len(self.tokens)


def _ident(ts: _TokenStream) -> str:
    tok = ts.next()
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok) or tok in KEYWORDS:
        raise ParseError(f"expected identifier, got {tok!r}")
    return tok


# ---------------------------------------------------------------------------
# Formula parsing


class _SymbolTable:
    """Resolves free relation symbols and constants while parsing.

    With an explicit vocabulary, unknown symbols are errors; otherwise the
    vocabulary is inferred from use.
    """

    def __init__(self, vocab: Vocabulary | None):
        self.fixed = vocab
        self.relations: dict[str, int] = dict(vocab.arity_of) if vocab else {}
        self.constants: list[str] = list(vocab.constants) if vocab else []

    def relation(self, name: str, arity: int):
        if self.fixed is not None:
            if name not in self.relations:
                raise ParseError(f"undeclared relation {name}")
            if self.relations[name] != arity:
                raise ParseError(f"arity mismatch for {name}")
            return
        if name in self.constants:
            raise ParseError(f"{name} used both as constant and relation")
        if self.relations.setdefault(name, arity) != arity:
            raise ParseError(f"arity mismatch for {name}")

    def constant(self, name: str):
        if self.fixed is not None:
            if name not in self.constants:
                raise ParseError(f"unbound variable or undeclared constant {name}")
            return
        if name in self.relations:
            raise ParseError(f"{name} used both as constant and relation")
        if name not in self.constants:
            self.constants.append(name)

    def vocabulary(self) -> Vocabulary:
        if self.fixed is not None:
            return self.fixed
        return Vocabulary(tuple(self.constants),
                          tuple(sorted(self.relations.items())))


def parse_formula(text: str, vocab: Vocabulary | None = None):
    """Parse a .sof formula; returns a ClausalFormula or a TreeFormula."""
    ts = _TokenStream(_tokenize(text))
    if ts.at_end():
        raise ParseError("empty formula")
    formula = (_parse_clausal(ts, vocab) if _looks_clausal(ts)
               else _parse_general(ts, vocab))
    if not ts.at_end():
        raise ParseError(f"trailing input starting at {ts.peek()!r}")
    return formula


def _looks_clausal(ts: _TokenStream) -> bool:
    i = 0
    if ts.peek(i) == "ex":
        return True
    while ts.peek(i) in ("exists2", "forall2"):
        i += 1  # IDENT
        if ts.peek(i + 1) != "/":
            return False
        i += 3  # IDENT / INT
        if ts.peek(i) != ".":
            return False
        i += 1
    return ts.peek(i) == "all"


def _parse_clausal(ts: _TokenStream, vocab,
                   symbols: _SymbolTable | None = None) -> ClausalFormula:
    symbols = symbols if symbols is not None else _SymbolTable(vocab)
    fo_exists: list[str] = []
    if ts.peek() == "ex":
        ts.next()
        while ts.peek() != ".":
            fo_exists.append(_ident(ts))
        ts.expect(".")
        if not fo_exists:
            raise ParseError("'ex' needs at least one variable")
    so_prefix: list[SOQuant] = []
    while ts.peek() in ("exists2", "forall2"):
        quant = "exists" if ts.next() == "exists2" else "forall"
        name = _ident(ts)
        ts.expect("/")
        arity = int(ts.next())
        ts.expect(".")
        so_prefix.append(SOQuant(quant, name, arity))
    ts.expect("all")
    fo_vars: list[str] = []
    while ts.peek() != ".":
        fo_vars.append(_ident(ts))
    ts.expect(".")
    if not fo_vars:
        raise ParseError("'all' needs at least one variable")

    so_arities = {q.name: q.arity for q in so_prefix}
    bound = set(fo_exists) | set(fo_vars)
    clauses = [_parse_clause(ts, symbols, so_arities, bound)]
    while ts.peek() == "&":
        ts.next()
        clauses.append(_parse_clause(ts, symbols, so_arities, bound))
    return ClausalFormula(symbols.vocabulary(), tuple(so_prefix),
                          tuple(fo_vars), tuple(clauses), tuple(fo_exists))


def _parse_clausal_with(ts, symbols, so_scope, fo_scope) -> Node:
    """An embedded (closed) clausal formula inside a general expression.

    The symbol table is shared; vocabulary resolution stays deferred until
    the whole input is read.  Binders of the enclosing expression are not
    visible inside, so these subformulas must be closed.
    """
    clausal = _parse_clausal(ts, None, symbols)
    clash = (set(clausal.fo_exists) | set(clausal.fo_vars)
             | {q.name for q in clausal.so_prefix}) & (set(fo_scope)
                                                       | set(so_scope))
    if clash:
        raise ParseError(f"rebinding of {sorted(clash)} inside a clausal "
                         f"subformula")
    return clausal.to_tree().root


def _parse_clause(ts, symbols, so_arities, bound) -> Clause:
    ts.expect("(")
    lits = [_parse_literal(ts, symbols, so_arities, bound)]
    while ts.peek() == "|":
        ts.next()
        lits.append(_parse_literal(ts, symbols, so_arities, bound))
    ts.expect(")")
    return Clause(tuple(lits))


def _parse_literal(ts, symbols, so_arities, bound):
    if ts.peek() == "false":
        ts.next()
        return FALSUM
    negate = False
    if ts.peek() == "~":
        ts.next()
        negate = True
    if ts.peek() == "some":
        if negate:
            raise ParseError("negated guard '~ some' is not allowed")
        ts.next()
        var = _ident(ts)
        if var not in so_arities:
            raise ParseError(f"guard on undeclared second-order variable {var}")
        return GuardedExists(var)
    lit = _parse_atom(ts, symbols, so_arities, bound)
    return negated(lit) if negate else lit


def _parse_atom(ts, symbols, so_arities, bound):
    first = _ident(ts)
    if ts.peek() == "(":
        ts.next()
        terms = [_parse_term(ts, symbols, bound)]
        while ts.peek() == ",":
            ts.next()
            terms.append(_parse_term(ts, symbols, bound))
        ts.expect(")")
        if first in so_arities:
            if so_arities[first] != len(terms):
                raise ParseError(f"arity mismatch for {first}")
        else:
            symbols.relation(first, len(terms))
        return Atom(first, tuple(terms), True)
    left = _resolve_term(first, symbols, bound)
    ts.expect("=")
    right = _parse_term(ts, symbols, bound)
    return TupleEq((left,), (right,), True)


def _parse_term(ts, symbols, bound) -> Term:
    return _resolve_term(_ident(ts), symbols, bound)


def _resolve_term(name, symbols, bound) -> Term:
    if name in bound:
        return v(name)
    symbols.constant(name)
    return c(name)


# --- general expressions ----------------------------------------------------


def _parse_general(ts: _TokenStream, vocab) -> TreeFormula:
    symbols = _SymbolTable(vocab)
    root = _parse_expr(ts, symbols, {}, set())
    return TreeFormula(symbols.vocabulary(), root)


def _parse_expr(ts, symbols, so_scope, fo_scope) -> Node:
    tok = ts.peek()
    if tok in ("exists", "forall"):
        ts.next()
        names = []
        while ts.peek() != ".":
            names.append(_ident(ts))
        ts.expect(".")
        if not names:
            raise ParseError(f"'{tok}' needs at least one variable")
        for n in names:
            if n in fo_scope or n in so_scope:
                raise ParseError(f"rebinding of {n}")
        body = _parse_expr(ts, symbols, so_scope, fo_scope | set(names))
        cls = Exists if tok == "exists" else ForAll
        for n in reversed(names):
            body = cls(n, body)
        return body
    if tok in ("exists2", "forall2"):
        ts.next()
        name = _ident(ts)
        ts.expect("/")
        arity = int(ts.next())
        ts.expect(".")
        if name in so_scope or name in fo_scope:
            raise ParseError(f"rebinding of {name}")
        body = _parse_expr(ts, symbols, {**so_scope, name: arity}, fo_scope)
        cls = ExistsSO if tok == "exists2" else ForAllSO
        return cls(name, arity, body)
    return _parse_iff(ts, symbols, so_scope, fo_scope)


def _parse_iff(ts, symbols, so_scope, fo_scope) -> Node:
    left = _parse_imp(ts, symbols, so_scope, fo_scope)
    while ts.peek() == "<->":
        ts.next()
        right = _parse_imp(ts, symbols, so_scope, fo_scope)
        left = Conj((Disj((_neg(left), right)), Disj((_neg(right), left))))
    return left


def _parse_imp(ts, symbols, so_scope, fo_scope) -> Node:
    left = _parse_or(ts, symbols, so_scope, fo_scope)
    if ts.peek() == "->":
        ts.next()
        right = _parse_imp(ts, symbols, so_scope, fo_scope)
        return Disj((_neg(left), right))
    return left


def _parse_or(ts, symbols, so_scope, fo_scope) -> Node:
    parts = [_parse_and(ts, symbols, so_scope, fo_scope)]
    while ts.peek() == "|":
        ts.next()
        parts.append(_parse_and(ts, symbols, so_scope, fo_scope))
    return parts[0] if len(parts) == 1 else Disj(tuple(parts))


def _parse_and(ts, symbols, so_scope, fo_scope) -> Node:
    parts = [_parse_unary(ts, symbols, so_scope, fo_scope)]
    while ts.peek() == "&":
        ts.next()
        parts.append(_parse_unary(ts, symbols, so_scope, fo_scope))
    return parts[0] if len(parts) == 1 else Conj(tuple(parts))


def _parse_unary(ts, symbols, so_scope, fo_scope) -> Node:
    tok = ts.peek()
    if tok == "~":
        ts.next()
        if ts.peek() == "some":
            raise ParseError("negated guard '~ some' is not allowed")
        return _neg(_parse_unary(ts, symbols, so_scope, fo_scope))
    if tok == "(":
        ts.next()
        if _looks_clausal(ts):
            # a parenthesized prefixed-clausal formula (how disjunctions of
            # clausal formulas print); embedded as its tree form
            clausal = _parse_clausal_with(ts, symbols, so_scope, fo_scope)
            ts.expect(")")
            return clausal
        inner = _parse_expr(ts, symbols, so_scope, fo_scope)
        ts.expect(")")
        return inner
    if tok in ("exists", "forall", "exists2", "forall2"):
        return _parse_expr(ts, symbols, so_scope, fo_scope)
    if tok == "true":
        ts.next()
        return TRUE_NODE
    if tok == "false":
        ts.next()
        return FALSE_NODE
    if tok == "some":
        ts.next()
        var = _ident(ts)
        if var not in so_scope:
            raise ParseError(f"guard on undeclared second-order variable {var}")
        return Lit(GuardedExists(var))
    lit = _parse_atom_general(ts, symbols, so_scope, fo_scope)
    return Lit(lit)


def _parse_atom_general(ts, symbols, so_scope, fo_scope):
    first = _ident(ts)
    if ts.peek() == "(":
        ts.next()
        terms = [_parse_term_general(ts, symbols, fo_scope)]
        while ts.peek() == ",":
            ts.next()
            terms.append(_parse_term_general(ts, symbols, fo_scope))
        ts.expect(")")
        if first in so_scope:
            if so_scope[first] != len(terms):
                raise ParseError(f"arity mismatch for {first}")
        else:
            symbols.relation(first, len(terms))
        return Atom(first, tuple(terms), True)
    if first in fo_scope:
        left = v(first)
    else:
        symbols.constant(first)
        left = c(first)
    ts.expect("=")
    right = _parse_term_general(ts, symbols, fo_scope)
    return TupleEq((left,), (right,), True)


def _parse_term_general(ts, symbols, fo_scope) -> Term:
    name = _ident(ts)
    if name in fo_scope:
        return v(name)
    symbols.constant(name)
    return c(name)


def _neg(node: Node) -> Node:
    if isinstance(node, Lit):
        if isinstance(node.lit, GuardedExists):
            raise ParseError("negated guard is not allowed")
        if isinstance(node.lit, Falsum):
            return TRUE_NODE
        return Lit(negated(node.lit))
    return Neg(node)


# ---------------------------------------------------------------------------
# Formula printing


def print_literal(lit) -> str:
    if isinstance(lit, Falsum):
        return "false"
    if isinstance(lit, GuardedExists):
        return f"some {lit.var}"
    if isinstance(lit, Atom):
        body = f"{lit.pred}({','.join(t.name for t in lit.terms)})"
        return body if lit.positive else f"~{body}"
    if isinstance(lit, TupleEq):
        if len(lit.left) != 1:
            raise StructuralError("multi-coordinate tuple equality has no "
                                  "concrete syntax; distribute it first")
        body = f"{lit.left[0].name} = {lit.right[0].name}"
        return body if lit.positive else f"~{body}"
    raise StructuralError(f"unprintable literal {lit!r}")


def print_formula(formula) -> str:
    if isinstance(formula, ClausalFormula):
        if formula.is_trivially_true():
            return "true"
        if not formula.fo_vars:
            return _print_node(formula.to_tree().root, top=True)
        parts = []
        if formula.fo_exists:
            parts.append(f"ex {' '.join(formula.fo_exists)}.")
        for q in formula.so_prefix:
            kw = "exists2" if q.quant == "exists" else "forall2"
            parts.append(f"{kw} {q.name}/{q.arity}.")
        parts.append(f"all {' '.join(formula.fo_vars)}.")
        clauses = " & ".join(
            "(" + " | ".join(print_literal(l) for l in cl.literals) + ")"
            for cl in formula.matrix)
        return " ".join(parts) + " " + clauses
    if isinstance(formula, TreeFormula):
        return _print_node(formula.root, top=True)
    if isinstance(formula, (list, tuple)):
        return " | ".join(f"({print_formula(f)})" for f in formula)
    disjuncts = getattr(formula, "disjuncts", None)
    if disjuncts is not None:
        return print_formula(tuple(disjuncts))
    raise StructuralError(f"unprintable formula {type(formula).__name__}")


def _print_node(node: Node, top=False) -> str:
    if isinstance(node, Lit):
        text = print_literal(node.lit)
        return f"({text})" if " = " in text and not top else text
    if isinstance(node, Conj):
        if not node.parts:
            return "true"
        return " & ".join(_wrap(p) for p in node.parts)
    if isinstance(node, Disj):
        if not node.parts:
            return "false"
        return " | ".join(_wrap(p) for p in node.parts)
    if isinstance(node, Neg):
        return f"~{_wrap(node.body)}"
    if isinstance(node, (ForAll, Exists)):
        kw = "forall" if isinstance(node, ForAll) else "exists"
        return f"{kw} {node.var}. {_print_node(node.body, top=True)}"
    if isinstance(node, (ForAllSO, ExistsSO)):
        kw = "forall2" if isinstance(node, ForAllSO) else "exists2"
        return f"{kw} {node.var}/{node.arity}. {_print_node(node.body, top=True)}"
    raise StructuralError(f"unprintable node {node!r}")


def _wrap(node: Node) -> str:
    if isinstance(node, Lit) and not isinstance(node.lit, TupleEq):
        return _print_node(node)
    if isinstance(node, (Conj, Disj)) and not node.parts:
        return _print_node(node)
    return f"({_print_node(node, top=True)})"


# ---------------------------------------------------------------------------
# Structures and vocabularies


def parse_structure(text: str, vocab: Vocabulary | None = None) -> FiniteStructure:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or not lines[0].startswith("domain"):
        raise ParseError("structure must start with 'domain N'")
    try:
        n = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise ParseError("malformed domain line") from exc
    if n < 1:
        raise ParseError("domain must be nonempty")

    ordered = False
    consts: dict[str, int] = {}
    rels: dict[str, tuple[int, set[tuple[int, ...]]]] = {}
    for ln in lines[1:]:
        if ln == "ordered":
            if ordered:
                raise ParseError("duplicate 'ordered' declaration")
            ordered = True
        elif ln.startswith("const"):
            m = re.fullmatch(r"const\s+(\w+)\s*=\s*(\d+)", ln)
            if not m:
                raise ParseError(f"malformed const line: {ln}")
            name, value = m.group(1), int(m.group(2))
            if name in consts or name in rels:
                raise ParseError(f"duplicate declaration of {name}")
            if value >= n:
                raise ParseError(f"constant {name} = {value} out of range")
            consts[name] = value
        elif ln.startswith("rel"):
            m = re.fullmatch(r"rel\s+(\w+)\s*/\s*(\d+)\s*=\s*\{(.*)\}", ln)
            if not m:
                raise ParseError(f"malformed rel line: {ln}")
            name, arity, body = m.group(1), int(m.group(2)), m.group(3).strip()
            if name in rels or name in consts:
                raise ParseError(f"duplicate declaration of {name}")
            tuples = set()
            if body:
                for part in re.findall(r"\(([^()]*)\)", body):
                    t = tuple(int(x) for x in part.split(","))
                    if len(t) != arity:
                        raise ParseError(f"tuple {t} has wrong arity for {name}/{arity}")
                    if any(e >= n or e < 0 for e in t):
                        raise ParseError(f"element out of range in {name}: {t}")
                    tuples.add(t)
            rels[name] = (arity, tuples)
        else:
            raise ParseError(f"unrecognized line: {ln}")

    if ordered:
        for r, _ in (("le", 2), ("succ", 2)):
            if r in rels:
                raise ParseError(f"'ordered' synthesizes {r}; do not declare it")
        rels.update({r: (2, set(t)) for r, t in natural_order_relations(n).items()})
        consts.setdefault("min", 0)
        consts["min"] = 0
        consts["max"] = n - 1

    declared = Vocabulary(tuple(consts), tuple((r, a) for r, (a, _) in rels.items()),
                          ordered=ordered)
    if vocab is not None:
        missing = ((set(vocab.constants) - set(consts))
                   | (set(vocab.arity_of) - set(rels)))
        if missing:
            raise ParseError(f"missing symbol(s): {sorted(missing)}")
        declared = vocab
    return make_structure(declared, n, consts,
                          {r: t for r, (_, t) in rels.items()})


def print_structure(s: FiniteStructure) -> str:
    lines = [f"domain {s.n}"]
    if s.vocabulary.ordered:
        lines.append("ordered")
    builtin_consts = {"min", "max"} if s.vocabulary.ordered else set()
    builtin_rels = {"le", "succ"} if s.vocabulary.ordered else set()
    for name, value in s.const_items:
        if name not in builtin_consts:
            lines.append(f"const {name} = {value}")
    for name, tuples in s.rel_items:
        if name in builtin_rels:
            continue
        arity = s.vocabulary.arity_of[name]
        body = ",".join("(" + ",".join(map(str, t)) + ")" for t in sorted(tuples))
        lines.append(f"rel {name}/{arity} = {{{body}}}")
    return "\n".join(lines) + "\n"


def parse_vocabulary(text: str) -> Vocabulary:
    consts: list[str] = []
    rels: list[tuple[str, int]] = []
    ordered = False
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln == "ordered":
            ordered = True
        elif ln.startswith("const"):
            consts.append(ln.split()[1])
        elif ln.startswith("rel"):
            m = re.fullmatch(r"rel\s+(\w+)\s*/\s*(\d+)", ln)
            if not m:
                raise ParseError(f"malformed vocabulary line: {ln}")
            rels.append((m.group(1), int(m.group(2))))
        else:
            raise ParseError(f"unrecognized vocabulary line: {ln}")
    if ordered:
        return Vocabulary.make_ordered(tuple(consts), tuple(rels))
    return Vocabulary(tuple(consts), tuple(rels))


# ---------------------------------------------------------------------------
# QDIMACS


def emit_qdimacs(qbf, atom_index=None) -> str:
    """Serialize a ground CNF QBF; byte-deterministic for a fixed atom order."""
    if not qbf.cnf:
        raise UnsupportedFormatError("QDIMACS output requires a CNF matrix")
    nvars = sum(len(block) for _, block in qbf.prefix)
    lines = [f"p cnf {nvars} {len(qbf.matrix)}"]
    for quant, block in qbf.prefix:
        kw = "e" if quant == "exists" else "a"
        lines.append(f"{kw} {' '.join(map(str, block))} 0")
    for clause in qbf.matrix:
        lines.append(" ".join(map(str, clause + (0,))))
    if atom_index is not None:
        for ident, (name, t) in enumerate(atom_index.atoms, start=1):
            lines.append(f"c atom {ident} {name}({','.join(map(str, t))})")
    return "\n".join(lines) + "\n"
