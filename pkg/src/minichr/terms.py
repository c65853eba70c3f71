"""Term, expression and rule representations for the CHR subset.

Ground terms are plain Python values: atoms are ``str``, integers are
``int``.  Logic variables are :class:`Var` instances whose identity is the
numeric id (the name is only for display).  This keeps matching and store
hashing at native speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Var:
    """A logic variable.  Two Vars are equal iff they have the same id."""

    id: int
    name: str = field(compare=False, default="_")

    def __repr__(self):
        return f"Var({self.id}, {self.name!r})"


# A term is an atom (str), an integer, or a variable.
Term = Var | str | int


def is_ground(t: Term) -> bool:
    return not isinstance(t, Var)


@dataclass(frozen=True)
class Atom:
    """A CHR constraint pattern or instance: symbol plus argument terms.

    Infix ``~>``/2 is normalized to this shape with symbol ``"~>"``.
    """

    symbol: str
    args: tuple[Term, ...]

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def functor(self) -> tuple[str, int]:
        return (self.symbol, len(self.args))


@dataclass(frozen=True)
class BinExpr:
    """Arithmetic node: ``+`` or ``max`` over two sub-expressions."""

    op: str  # '+' or 'max'
    left: "Expr"
    right: "Expr"


# Arithmetic expressions: integer literals, variables, and BinExpr trees.
Expr = Var | int | BinExpr


@dataclass(frozen=True)
class Cmp:
    """A guard test: comparison of two arithmetic expressions."""

    op: str  # one of '>=', '>', '=<', '<', '=='
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Bind:
    """Body item ``L = R``: restricted equality (bind or ground test)."""

    left: Term
    right: Term


@dataclass(frozen=True)
class Is:
    """Body item ``V is E``: evaluate E and bind V to the result."""

    target: Var
    expr: Expr


@dataclass(frozen=True)
class TrueGoal:
    """The trivial goal ``true``."""


TRUE = TrueGoal()

BodyItem = Atom | Bind | Is | TrueGoal


class ExprError(Exception):
    """Raised when an arithmetic expression is not evaluable."""


def eval_expr(expr: Expr, deref) -> int:
    """Evaluate an arithmetic expression to an int.

    ``deref`` maps a Var to its current value (a Var again if unbound).
    Raises ExprError if a variable is unbound or a value is not an int.
    """
    if isinstance(expr, int):
        return expr
    if isinstance(expr, Var):
        v = deref(expr)
        if isinstance(v, Var):
            raise ExprError(f"unbound variable {v.name} in arithmetic expression")
        if not isinstance(v, int):
            raise ExprError(f"non-integer value {v!r} in arithmetic expression")
        return v
    if expr.op == "+":
        return eval_expr(expr.left, deref) + eval_expr(expr.right, deref)
    if expr.op == "max":
        return max(eval_expr(expr.left, deref), eval_expr(expr.right, deref))
    raise ExprError(f"unknown operator {expr.op!r}")


_CMP_FUNCS = {
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "=<": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
}


def eval_cmp(test: Cmp, deref) -> bool:
    """Evaluate a guard comparison; non-evaluable guards never hold."""
    try:
        return _CMP_FUNCS[test.op](eval_expr(test.left, deref), eval_expr(test.right, deref))
    except ExprError:
        return False


@dataclass(frozen=True)
class Rule:
    """One CHR rule.

    ``kept`` and ``removed`` partition the head: a simplification rule has
    an empty kept part, a propagation rule an empty removed part, and a
    simpagation rule both non-empty.  Rule order in a program is textual.
    """

    name: str | None
    kept: tuple[Atom, ...]
    removed: tuple[Atom, ...]
    guard: tuple[Cmp, ...]
    body: tuple[BodyItem, ...]
    source_index: int = 0

    @property
    def kind(self) -> str:
        if not self.kept:
            return "simplification"
        if not self.removed:
            return "propagation"
        return "simpagation"

    @property
    def head_atoms(self) -> tuple[Atom, ...]:
        """Head atoms in textual order (kept part first for simpagation)."""
        return self.kept + self.removed

    @property
    def label(self) -> str:
        """Display name: the rule name, or a synthesized positional one."""
        return self.name if self.name is not None else f"rule_{self.source_index + 1}"


@dataclass
class Program:
    """An ordered rule list plus the arity declared by first use."""

    rules: tuple[Rule, ...]
    arities: dict[str, int]


# ---------------------------------------------------------------------------
# Rendering (canonical concrete syntax)

def render_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, int):
        return str(t)
    return t


def render_expr(e: Expr) -> str:
    if isinstance(e, BinExpr):
        if e.op == "max":
            return f"max({render_expr(e.left)},{render_expr(e.right)})"
        return f"{render_expr(e.left)}+{render_expr(e.right)}"
    return render_term(e)


def render_atom(a: Atom) -> str:
    if a.symbol == "~>" and a.arity == 2:
        return f"{render_term(a.args[0])} ~> {render_term(a.args[1])}"
    if not a.args:
        return a.symbol
    return f"{a.symbol}({','.join(render_term(t) for t in a.args)})"


def render_body_item(item: BodyItem) -> str:
    if isinstance(item, Atom):
        return render_atom(item)
    if isinstance(item, Bind):
        return f"{render_term(item.left)} = {render_term(item.right)}"
    if isinstance(item, Is):
        return f"{render_term(item.target)} is {render_expr(item.expr)}"
    return "true"


def render_cmp(c: Cmp) -> str:
    return f"{render_expr(c.left)} {c.op} {render_expr(c.right)}"


def render_rule(r: Rule) -> str:
    parts = []
    if r.name is not None:
        parts.append(f"{r.name} @ ")
    if r.kind == "simplification":
        parts.append(", ".join(render_atom(a) for a in r.removed))
        parts.append(" <=> ")
    elif r.kind == "propagation":
        parts.append(", ".join(render_atom(a) for a in r.kept))
        parts.append(" ==> ")
    else:
        parts.append(", ".join(render_atom(a) for a in r.kept))
        parts.append(" \\ ")
        parts.append(", ".join(render_atom(a) for a in r.removed))
        parts.append(" <=> ")
    if r.guard:
        parts.append(", ".join(render_cmp(c) for c in r.guard))
        parts.append(" | ")
    parts.append(", ".join(render_body_item(i) for i in r.body))
    parts.append(".")
    return "".join(parts)


def render_program(p: Program) -> str:
    if not p.rules:
        return ""
    return "\n".join(render_rule(r) for r in p.rules) + "\n"


# ---------------------------------------------------------------------------
# Structural comparison modulo variable renaming

def _canon_term(t, numbering: dict[int, int]):
    if isinstance(t, Var):
        k = numbering.setdefault(t.id, len(numbering))
        return ("v", k)
    if isinstance(t, int):
        return ("i", t)
    return ("c", t)


def _canon_expr(e, numbering):
    if isinstance(e, BinExpr):
        return (e.op, _canon_expr(e.left, numbering), _canon_expr(e.right, numbering))
    return _canon_term(e, numbering)


def _canon_atom(a: Atom, numbering):
    return (a.symbol, tuple(_canon_term(t, numbering) for t in a.args))


def _canon_item(item, numbering):
    if isinstance(item, Atom):
        return ("atom", _canon_atom(item, numbering))
    if isinstance(item, Bind):
        return ("=", _canon_term(item.left, numbering), _canon_term(item.right, numbering))
    if isinstance(item, Is):
        return ("is", _canon_term(item.target, numbering), _canon_expr(item.expr, numbering))
    return ("true",)


def alpha_key_rule(r: Rule):
    """A comparable key for a rule, with variables renumbered by first use."""
    numbering: dict[int, int] = {}
    return (
        r.name,
        tuple(_canon_atom(a, numbering) for a in r.kept),
        tuple(_canon_atom(a, numbering) for a in r.removed),
        tuple((c.op, _canon_expr(c.left, numbering), _canon_expr(c.right, numbering)) for c in r.guard),
        tuple(_canon_item(i, numbering) for i in r.body),
    )


def alpha_key(p: Program):
    """Structural identity key of a program, modulo variable renaming."""
    return tuple(alpha_key_rule(r) for r in p.rules)


def programs_equal(p1: Program, p2: Program) -> bool:
    return alpha_key(p1) == alpha_key(p2)
