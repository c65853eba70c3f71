"""Parser for the concrete ASCII rule syntax.

Grammar (see docs/grammar.md for the full EBNF):

    program    ::= rule*
    rule       ::= [name "@"] head ("<=>" | "==>") [guard "|"] body "."
                 | [name "@"] head "\\" head "<=>" [guard "|"] body "."
    head       ::= chr_atom ("," chr_atom)*
    guard      ::= guard_test ("," guard_test)*
    guard_test ::= "true" | expr cmp_op expr
    body       ::= body_item ("," body_item)*
    body_item  ::= "true" | chr_atom | term "=" term | variable "is" expr

Atoms are lower-case identifiers, variables upper-case or ``_`` (a fresh
variable per occurrence), integers optionally signed.  ``X ~> Y`` is the
infix form of the binary constraint ``~>``/2.  ``%`` starts a comment that
runs to end of line.  Constraint arguments are flat terms; nested compound
arguments are not part of this subset.
"""

from __future__ import annotations

from dataclasses import dataclass

from .terms import (
    TRUE,
    Atom,
    BinExpr,
    Bind,
    BodyItem,
    Cmp,
    Expr,
    Is,
    Program,
    Rule,
    Term,
    Var,
)

_CMP_OPS = (">=", ">", "=<", "<", "==")
_THREE_CHAR = ("<=>", "==>")
_TWO_CHAR = ("=<", ">=", "==", "~>")
_ONE_CHAR = "<>=@\\|,().+"

_MAX_PAREN_DEPTH = 200


class ParseError(Exception):
    """Syntax or consistency error, with a 1-based source location."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Warning:
    """A validator finding that does not prevent execution."""

    kind: str  # 'arity' | 'dead-rule' | 'unbound-guard-var' | 'unbound-is-var'
    message: str
    rule_index: int | None = None


@dataclass(frozen=True)
class _Token:
    kind: str  # 'atom' | 'var' | 'int' | 'op' | 'eof'
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, n = 0, len(text)
    line, col = 1, 1

    def advance(k: int):
        nonlocal i, line, col
        for _ in range(k):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = text[i]
        if c in " \t\r\n":
            advance(1)
            continue
        if c == "%":
            while i < n and text[i] != "\n":
                advance(1)
            continue
        start_line, start_col = line, col
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "atom" if c.islower() else "var"
            tokens.append(_Token(kind, word, start_line, start_col))
            advance(j - i)
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("int", text[i:j], start_line, start_col))
            advance(j - i)
            continue
        three = text[i : i + 3]
        if three in _THREE_CHAR:
            tokens.append(_Token("op", three, start_line, start_col))
            advance(3)
            continue
        two = text[i : i + 2]
        if two in _TWO_CHAR:
            tokens.append(_Token("op", two, start_line, start_col))
            advance(2)
            continue
        if c in _ONE_CHAR:
            tokens.append(_Token("op", c, start_line, start_col))
            advance(1)
            continue
        raise ParseError(f"unknown operator or character {c!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.vars: dict[str, Var] = {}
        self.next_var = 0
        self.arities: dict[str, int] = {}
        self.rule_names: set[str] = set()

    # -- token helpers ------------------------------------------------

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_op(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text == text

    def expect_op(self, text: str, what: str) -> _Token:
        tok = self.peek()
        if not self.at_op(text):
            raise ParseError(f"expected {what}, found {tok.text!r}" if tok.kind != "eof"
                             else f"expected {what}, found end of input", tok.line, tok.col)
        return self.next()

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    # -- variables and symbols ----------------------------------------

    def make_var(self, name: str) -> Var:
        if name == "_":
            v = Var(self.next_var, "_")
            self.next_var += 1
            return v
        v = self.vars.get(name)
        if v is None:
            v = Var(self.next_var, name)
            self.next_var += 1
            self.vars[name] = v
        return v

    def register_symbol(self, name: str, arity: int, tok: _Token):
        seen = self.arities.get(name)
        if seen is None:
            self.arities[name] = arity
        elif seen != arity:
            self.error(f"symbol {name!r} used with arity {arity}, previously {seen}", tok)

    # -- terms and atoms ----------------------------------------------

    def parse_arg(self) -> Term:
        tok = self.peek()
        if tok.kind == "var":
            self.next()
            return self.make_var(tok.text)
        if tok.kind == "int":
            self.next()
            return int(tok.text)
        if tok.kind == "atom":
            self.next()
            if self.at_op("("):
                self.error("nested compound arguments are not supported", tok)
            return tok.text
        self.error(f"expected a term, found {tok.text!r}" if tok.kind != "eof"
                   else "expected a term, found end of input")

    def parse_primary(self):
        """A term or a compound atom.  Returns Term | Atom."""
        tok = self.peek()
        if tok.kind == "atom":
            self.next()
            if self.at_op("("):
                self.next()
                args = [self.parse_arg()]
                while self.at_op(","):
                    self.next()
                    args.append(self.parse_arg())
                self.expect_op(")", "')'")
                self.register_symbol(tok.text, len(args), tok)
                return Atom(tok.text, tuple(args))
            return tok.text
        if tok.kind == "var":
            self.next()
            return self.make_var(tok.text)
        if tok.kind == "int":
            self.next()
            return int(tok.text)
        self.error(f"expected a term or constraint, found {tok.text!r}" if tok.kind != "eof"
                   else "expected a term or constraint, found end of input")

    def parse_chr_atom(self, context: str) -> Atom:
        tok = self.peek()
        item = self.parse_primary()
        if self.at_op("~>"):
            op_tok = self.next()
            right = self.parse_primary()
            if isinstance(item, Atom) or isinstance(right, Atom):
                self.error("arguments of ~> must be plain terms", op_tok)
            self.register_symbol("~>", 2, op_tok)
            return Atom("~>", (item, right))
        if isinstance(item, Atom):
            return item
        if isinstance(item, str):
            self.register_symbol(item, 0, tok)
            return Atom(item, ())
        self.error(f"a {context} must be a CHR constraint", tok)

    # -- arithmetic expressions ---------------------------------------

    def parse_expr(self, depth: int = 0) -> Expr:
        node = self.parse_addend(depth)
        while self.at_op("+"):
            self.next()
            node = BinExpr("+", node, self.parse_addend(depth))
        return node

    def parse_addend(self, depth: int) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return int(tok.text)
        if tok.kind == "var":
            self.next()
            return self.make_var(tok.text)
        if tok.kind == "atom" and tok.text == "max":
            self.next()
            self.expect_op("(", "'(' after max")
            left = self.parse_expr(depth)
            self.expect_op(",", "',' between max arguments")
            right = self.parse_expr(depth)
            self.expect_op(")", "')'")
            return BinExpr("max", left, right)
        if self.at_op("("):
            if depth >= _MAX_PAREN_DEPTH:
                self.error("expression too deeply nested")
            self.next()
            node = self.parse_expr(depth + 1)
            self.expect_op(")", "')'")
            return node
        if tok.kind == "atom":
            self.error("only arithmetic built-ins are allowed here "
                       f"(found {tok.text!r})", tok)
        self.error(f"expected an arithmetic expression, found {tok.text!r}"
                   if tok.kind != "eof" else
                   "expected an arithmetic expression, found end of input")

    # -- guards and bodies --------------------------------------------

    def parse_guard(self) -> tuple[Cmp, ...]:
        tests: list[Cmp] = []
        while True:
            tok = self.peek()
            if tok.kind == "atom" and tok.text == "true":
                nxt = self.peek(1)
                if nxt.kind == "op" and nxt.text in (",", "|"):
                    self.next()
                else:
                    self.error("only arithmetic built-ins are allowed here", tok)
            else:
                left = self.parse_expr()
                op_tok = self.peek()
                if not (op_tok.kind == "op" and op_tok.text in _CMP_OPS):
                    self.error("guard tests must be comparisons "
                               "(>=, >, =<, <, ==)", op_tok)
                self.next()
                right = self.parse_expr()
                tests.append(Cmp(op_tok.text, left, right))
            if self.at_op(","):
                self.next()
                continue
            return tuple(tests)

    def parse_body_item(self) -> BodyItem:
        tok = self.peek()
        if tok.kind == "atom" and tok.text == "true":
            nxt = self.peek(1)
            if not (nxt.kind == "op" and nxt.text == "("):
                self.next()
                return TRUE
        item = self.parse_primary()
        if self.at_op("~>"):
            op_tok = self.next()
            right = self.parse_primary()
            if isinstance(item, Atom) or isinstance(right, Atom):
                self.error("arguments of ~> must be plain terms", op_tok)
            self.register_symbol("~>", 2, op_tok)
            return Atom("~>", (item, right))
        if self.at_op("="):
            eq_tok = self.next()
            if isinstance(item, Atom):
                self.error("left side of = must be a term", eq_tok)
            right = self.parse_primary()
            if isinstance(right, Atom):
                self.error("right side of = must be a term", eq_tok)
            return Bind(item, right)
        nxt = self.peek()
        if nxt.kind == "atom" and nxt.text == "is":
            is_tok = self.next()
            if not isinstance(item, Var):
                self.error("left side of 'is' must be a variable", is_tok)
            return Is(item, self.parse_expr())
        if isinstance(item, Atom):
            return item
        if isinstance(item, str):
            self.register_symbol(item, 0, tok)
            return Atom(item, ())
        self.error("a goal must be a constraint, =, is, or true", tok)

    def parse_body(self) -> tuple[BodyItem, ...]:
        if self.at_op("."):
            self.error("empty rule body (use 'true')")
        items = [self.parse_body_item()]
        while self.at_op(","):
            self.next()
            items.append(self.parse_body_item())
        return tuple(items)

    # -- rules ----------------------------------------------------------

    def guard_ahead(self) -> bool:
        """Look ahead for a '|' before the terminating '.' of this rule."""
        k = self.pos
        while k < len(self.tokens):
            tok = self.tokens[k]
            if tok.kind == "eof" or (tok.kind == "op" and tok.text == "."):
                return False
            if tok.kind == "op" and tok.text == "|":
                return True
            k += 1
        return False

    def parse_head_atoms(self, context: str) -> list[Atom]:
        atoms = [self.parse_chr_atom(context)]
        while self.at_op(","):
            self.next()
            atoms.append(self.parse_chr_atom(context))
        return atoms

    def parse_rule(self, index: int) -> Rule:
        self.vars = {}
        name = None
        if self.peek().kind == "atom" and self.peek(1).kind == "op" and self.peek(1).text == "@":
            name_tok = self.next()
            self.next()  # '@'
            name = name_tok.text
            if name in self.rule_names:
                self.error(f"duplicate rule name {name!r}", name_tok)
            self.rule_names.add(name)

        head_tok = self.peek()
        if self.at_op("<=>") or self.at_op("==>") or self.at_op("\\"):
            self.error("empty rule head", head_tok)
        first = self.parse_head_atoms("head constraint")

        kept: list[Atom]
        removed: list[Atom]
        if self.at_op("\\"):
            self.next()
            if self.at_op("<=>"):
                self.error("empty removed part of simpagation head")
            second = self.parse_head_atoms("head constraint")
            self.expect_op("<=>", "'<=>' after simpagation head")
            kept, removed = first, second
        elif self.at_op("<=>"):
            self.next()
            kept, removed = [], first
        elif self.at_op("==>"):
            self.next()
            kept, removed = first, []
        else:
            tok = self.peek()
            if tok.kind == "eof":
                self.error("unterminated rule (missing '<=>', '==>' or '.')", tok)
            self.error(f"expected '<=>', '==>' or '\\', found {tok.text!r}", tok)

        guard: tuple[Cmp, ...] = ()
        if self.guard_ahead():
            guard = self.parse_guard()
            self.expect_op("|", "'|' after guard")
        body = self.parse_body()
        end = self.peek()
        if end.kind == "eof":
            self.error("unterminated rule (missing '.')", end)
        self.expect_op(".", "'.' at end of rule")
        return Rule(name, tuple(kept), tuple(removed), guard, body, index)


def parse_program(text: str) -> Program:
    """Parse a rule program.  Raises ParseError on any malformed input."""
    p = _Parser(text)
    rules = []
    while p.peek().kind != "eof":
        rules.append(p.parse_rule(len(rules)))
    return Program(tuple(rules), p.arities)


def parse_query(text: str) -> list[BodyItem]:
    """Parse a goal: comma-separated items terminated by '.'.

    Variables with the same name are shared across the whole query.
    """
    p = _Parser(text)
    if p.peek().kind == "eof":
        p.error("empty query")
    items = [p.parse_body_item()]
    while p.at_op(","):
        p.next()
        items.append(p.parse_body_item())
    end = p.peek()
    if end.kind == "eof":
        p.error("unterminated query (missing '.')", end)
    p.expect_op(".", "'.' at end of query")
    if p.peek().kind != "eof":
        p.error("unexpected input after final '.'")
    return items


# ---------------------------------------------------------------------------
# Validation

def _atom_vars(a: Atom):
    for t in a.args:
        if isinstance(t, Var):
            yield t


def _expr_vars(e):
    if isinstance(e, Var):
        yield e
    elif isinstance(e, BinExpr):
        yield from _expr_vars(e.left)
        yield from _expr_vars(e.right)


def _const_foldable_false(c: Cmp) -> bool:
    from .terms import eval_cmp

    if any(True for _ in _expr_vars(c.left)) or any(True for _ in _expr_vars(c.right)):
        return False
    return not eval_cmp(c, lambda v: v)


def validate_program(p: Program) -> list[Warning]:
    """Static checks: inconsistent arities, dead guards, unbindable variables.

    Fresh variables introduced by body constraints are the normal CHR idiom
    and do not warn; guard variables must come from the head, and inputs of
    ``is`` must come from the head or an earlier ``is``/``=`` target.
    """
    warnings: list[Warning] = []
    seen: dict[str, int] = {}
    for r in p.rules:
        atoms = list(r.head_atoms) + [b for b in r.body if isinstance(b, Atom)]
        for a in atoms:
            prev = seen.get(a.symbol)
            if prev is None:
                seen[a.symbol] = a.arity
            elif prev != a.arity:
                warnings.append(Warning(
                    "arity",
                    f"symbol {a.symbol!r} used with arity {a.arity} and {prev}",
                    r.source_index,
                ))
                break

    for r in p.rules:
        head_vars = {v.id for a in r.head_atoms for v in _atom_vars(a)}
        for c in r.guard:
            if _const_foldable_false(c):
                warnings.append(Warning(
                    "dead-rule",
                    f"rule {r.label}: guard test '{c.op}' is always false",
                    r.source_index,
                ))
            for v in list(_expr_vars(c.left)) + list(_expr_vars(c.right)):
                if v.id not in head_vars:
                    warnings.append(Warning(
                        "unbound-guard-var",
                        f"rule {r.label}: guard variable {v.name} does not occur in the head",
                        r.source_index,
                    ))
        produced = set(head_vars)
        for item in r.body:
            if isinstance(item, Is):
                for v in _expr_vars(item.expr):
                    if v.id not in produced:
                        warnings.append(Warning(
                            "unbound-is-var",
                            f"rule {r.label}: variable {v.name} is not bound before 'is'",
                            r.source_index,
                        ))
                produced.add(item.target.id)
            elif isinstance(item, Bind):
                for t in (item.left, item.right):
                    if isinstance(t, Var):
                        produced.add(t.id)
            elif isinstance(item, Atom):
                produced.update(v.id for v in _atom_vars(item))
    return warnings
