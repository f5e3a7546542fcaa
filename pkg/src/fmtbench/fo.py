"""First-order syntax and evaluation over finite ordered structures.

The evaluator is Tarskian recursion with two search accelerations that the
verification workloads need at paper scale:

* quantifier blocks whose witnesses must satisfy a positive atom over an
  explicit (sparse) relation are enumerated from that relation's table
  instead of the whole universe;
* on structures whose order is the natural one, order atoms required of any
  witness are turned into integer range bounds, and blocks whose order
  constraints are unsatisfiable over a linear order are dismissed outright.

Both are pure search prunings; they never change satisfaction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from ._difference import Constraint, order_unsat
from .structures import ORDER, Structure

Assignment = Mapping[str, int]


class FormulaError(ValueError):
    pass


class FormulaParseError(FormulaError):
    pass


class EvaluationError(FormulaError):
    pass


class NotPrenexError(FormulaError):
    pass


# -- terms and formulas ------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Var | Const


@dataclass(frozen=True)
class Formula:
    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True)
class Atom(Formula):
    rel: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class Eq(Formula):
    left: Term
    right: Term


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula


@dataclass(frozen=True)
class And(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


def conj(*items: Formula) -> Formula:
    return items[0] if len(items) == 1 else And(tuple(items))


def disj(*items: Formula) -> Formula:
    return items[0] if len(items) == 1 else Or(tuple(items))


def exists(names: str | Iterable[str], body: Formula) -> Formula:
    for name in reversed([names] if isinstance(names, str) else list(names)):
        body = Exists(name, body)
    return body


def forall(names: str | Iterable[str], body: Formula) -> Formula:
    for name in reversed([names] if isinstance(names, str) else list(names)):
        body = Forall(name, body)
    return body


def leq(a: Term, b: Term) -> Formula:
    return Atom(ORDER, (a, b))


def lt(a: Term, b: Term) -> Formula:
    return conj(leq(a, b), Not(Eq(a, b)))


def free_vars(phi: Formula) -> frozenset[str]:
    if isinstance(phi, Atom):
        return frozenset(t.name for t in phi.args if isinstance(t, Var))
    if isinstance(phi, Eq):
        return frozenset(t.name for t in (phi.left, phi.right) if isinstance(t, Var))
    if isinstance(phi, Not):
        return free_vars(phi.sub)
    if isinstance(phi, (And, Or)):
        out: frozenset[str] = frozenset()
        for f in phi.items:
            out |= free_vars(f)
        return out
    if isinstance(phi, Implies):
        return free_vars(phi.left) | free_vars(phi.right)
    if isinstance(phi, (Exists, Forall)):
        return free_vars(phi.body) - {phi.var}
    raise TypeError(f"not a formula: {phi!r}")


def bound_vars(phi: Formula) -> frozenset[str]:
    if isinstance(phi, (Atom, Eq)):
        return frozenset()
    if isinstance(phi, Not):
        return bound_vars(phi.sub)
    if isinstance(phi, (And, Or)):
        out: frozenset[str] = frozenset()
        for f in phi.items:
            out |= bound_vars(f)
        return out
    if isinstance(phi, Implies):
        return bound_vars(phi.left) | bound_vars(phi.right)
    if isinstance(phi, (Exists, Forall)):
        return bound_vars(phi.body) | {phi.var}
    raise TypeError(f"not a formula: {phi!r}")


def subst_consts(phi: Formula, mapping: Mapping[str, Const]) -> Formula:
    """Replace free variables by constants (capture-free by construction)."""

    def term(t: Term) -> Term:
        if isinstance(t, Var) and t.name in mapping:
            return mapping[t.name]
        return t

    def walk(f: Formula, shadowed: frozenset[str]) -> Formula:
        if isinstance(f, Atom):
            return Atom(f.rel, tuple(t if isinstance(t, Const) or t.name in shadowed else term(t) for t in f.args))
        if isinstance(f, Eq):
            l = f.left if isinstance(f.left, Const) or f.left.name in shadowed else term(f.left)
            r = f.right if isinstance(f.right, Const) or f.right.name in shadowed else term(f.right)
            return Eq(l, r)
        if isinstance(f, Not):
            return Not(walk(f.sub, shadowed))
        if isinstance(f, And):
            return And(tuple(walk(x, shadowed) for x in f.items))
        if isinstance(f, Or):
            return Or(tuple(walk(x, shadowed) for x in f.items))
        if isinstance(f, Implies):
            return Implies(walk(f.left, shadowed), walk(f.right, shadowed))
        if isinstance(f, Exists):
            return Exists(f.var, walk(f.body, shadowed | {f.var}))
        if isinstance(f, Forall):
            return Forall(f.var, walk(f.body, shadowed | {f.var}))
        raise TypeError(f"not a formula: {f!r}")

    return walk(phi, frozenset())


def rename_bound(phi: Formula, avoid: frozenset[str]) -> Formula:
    """Alpha-rename bound variables so none of them lies in ``avoid``."""
    taken = set(avoid) | set(free_vars(phi)) | set(bound_vars(phi))
    counter = [0]

    def fresh(base: str) -> str:
        while True:
            counter[0] += 1
            cand = f"{base}{counter[0]}"
            if cand not in taken:
                taken.add(cand)
                return cand

    def walk(f: Formula, ren: dict[str, str]) -> Formula:
        if isinstance(f, Atom):
            return Atom(f.rel, tuple(Var(ren.get(t.name, t.name)) if isinstance(t, Var) else t for t in f.args))
        if isinstance(f, Eq):
            def t(x: Term) -> Term:
                return Var(ren.get(x.name, x.name)) if isinstance(x, Var) else x
            return Eq(t(f.left), t(f.right))
        if isinstance(f, Not):
            return Not(walk(f.sub, ren))
        if isinstance(f, And):
            return And(tuple(walk(x, ren) for x in f.items))
        if isinstance(f, Or):
            return Or(tuple(walk(x, ren) for x in f.items))
        if isinstance(f, Implies):
            return Implies(walk(f.left, ren), walk(f.right, ren))
        if isinstance(f, (Exists, Forall)):
            name = f.var
            if name in avoid:
                name = fresh(f.var)
                ren = {**ren, f.var: name}
            elif f.var in ren:
                ren = {k: v for k, v in ren.items() if k != f.var}
            node = Exists if isinstance(f, Exists) else Forall
            return node(name, walk(f.body, ren))
        raise TypeError(f"not a formula: {f!r}")

    return walk(phi, {})


# -- concrete syntax ---------------------------------------------------------

_TOKENS = ("(", ")", ",", ".", "&", "|", "->", "!", "=", "<=")


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if text.startswith("->", i):
            out.append(("op", "->"))
            i += 2
        elif text.startswith("<=", i):
            out.append(("op", "<="))
            i += 2
        elif c in "(),.&|!=":
            out.append(("op", c))
            i += 1
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("name", text[i:j]))
            i = j
        else:
            raise FormulaParseError(f"unexpected character {c!r} at offset {i}")
    return out


class _Parser:
    def __init__(self, text: str, vocab):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.vocab = vocab

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, value: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise FormulaParseError("unexpected end of input")
        if value is not None and tok[1] != value:
            raise FormulaParseError(f"expected {value!r}, found {tok[1]!r}")
        self.pos += 1
        return tok[1]

    def parse(self) -> Formula:
        phi = self.formula()
        if self.peek() is not None:
            raise FormulaParseError(f"trailing input at token {self.peek()[1]!r}")
        return phi

    def formula(self) -> Formula:
        tok = self.peek()
        if tok is not None and tok[1] in ("exists", "forall"):
            kind = self.take()
            name = self.take()
            if not name[0].isalpha() and name[0] != "_":
                raise FormulaParseError(f"bad variable name {name!r}")
            self.take(".")
            body = self.formula()
            return Exists(name, body) if kind == "exists" else Forall(name, body)
        return self.implication()

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek() is not None and self.peek()[1] == "->":
            self.take("->")
            return Implies(left, self.formula())
        return left

    def disjunction(self) -> Formula:
        items = [self.conjunction()]
        while self.peek() is not None and self.peek()[1] == "|":
            self.take("|")
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conjunction(self) -> Formula:
        items = [self.unary()]
        while self.peek() is not None and self.peek()[1] == "&":
            self.take("&")
            items.append(self.unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def unary(self) -> Formula:
        tok = self.peek()
        if tok is None:
            raise FormulaParseError("unexpected end of input")
        if tok[1] == "!":
            self.take("!")
            return Not(self.unary())
        if tok[1] == "(":
            self.take("(")
            phi = self.formula()
            self.take(")")
            return phi
        if tok[1] in ("exists", "forall"):
            return self.formula()
        return self.atom()

    def term(self) -> Term:
        kind, name = self.peek() or (None, None)
        if kind != "name":
            raise FormulaParseError(f"expected a term, found {name!r}")
        self.take()
        if self.vocab.has_constant(name):
            return Const(name)
        if self.vocab.has_relation(name):
            raise FormulaParseError(f"relation name {name!r} used as a term")
        return Var(name)

    def atom(self) -> Formula:
        kind, name = self.peek() or (None, None)
        if kind != "name":
            raise FormulaParseError(f"expected an atom, found {name!r}")
        if self.vocab.has_relation(name) and name != ORDER:
            self.take()
            self.take("(")
            args = [self.term()]
            while self.peek() is not None and self.peek()[1] == ",":
                self.take(",")
                args.append(self.term())
            self.take(")")
            arity = self.vocab.arity(name)
            if len(args) != arity:
                raise FormulaParseError(f"{name} expects {arity} arguments, got {len(args)}")
            return Atom(name, tuple(args))
        left = self.term()
        op = self.take()
        if op == "=":
            return Eq(left, self.term())
        if op == "<=":
            if not self.vocab.has_relation(ORDER):
                raise FormulaParseError("vocabulary lacks <=")
            return Atom(ORDER, (left, self.term()))
        raise FormulaParseError(f"expected '=' or '<=', found {op!r}")


def parse_formula(text: str, vocab) -> Formula:
    """Parse the concrete syntax against a vocabulary (arity-checked)."""
    return _Parser(text, vocab).parse()


def format_formula(phi: Formula) -> str:
    """Deterministic pretty-printer; output reparses to an equal AST."""
    if isinstance(phi, Atom):
        if phi.rel == ORDER:
            return f"{phi.args[0]} <= {phi.args[1]}"
        return f"{phi.rel}({', '.join(str(a) for a in phi.args)})"
    if isinstance(phi, Eq):
        return f"{phi.left} = {phi.right}"
    if isinstance(phi, Not):
        return f"!{_wrap(phi.sub)}"
    if isinstance(phi, And):
        return " & ".join(_wrap(f) for f in phi.items)
    if isinstance(phi, Or):
        return " | ".join(_wrap(f, or_child=True) for f in phi.items)
    if isinstance(phi, Implies):
        return f"{_wrap(phi.left, or_child=True)} -> {format_formula(phi.right)}"
    if isinstance(phi, Exists):
        return f"exists {phi.var}. {format_formula(phi.body)}"
    if isinstance(phi, Forall):
        return f"forall {phi.var}. {format_formula(phi.body)}"
    raise TypeError(f"not a formula: {phi!r}")


def _wrap(phi: Formula, or_child: bool = False) -> str:
    text = format_formula(phi)
    if isinstance(phi, (Atom, Eq, Not)):
        return text
    if or_child and isinstance(phi, And):
        return text
    return f"({text})"


# -- evaluation ---------------------------------------------------------------


class Evaluator:
    """Reusable evaluator for one structure (caches relation indexes)."""

    def __init__(self, structure: Structure):
        self.A = structure
        self._indexes: dict[tuple[str, int], dict[int, list[tuple[int, ...]]]] = {}
        self._reqs: dict[tuple[int, bool], tuple] = {}

    # .. public ..

    def evaluate(self, phi: Formula, env: Assignment | None = None) -> bool:
        scope = dict(env) if env else {}
        missing = free_vars(phi) - set(scope)
        if missing:
            raise EvaluationError(f"unbound free variables: {sorted(missing)}")
        return self._eval(phi, scope)

    # .. helpers ..

    def _resolve(self, t: Term, env: dict[str, int]) -> int:
        if isinstance(t, Var):
            try:
                return env[t.name]
            except KeyError:
                raise EvaluationError(f"unbound variable {t.name!r}") from None
        try:
            return self.A.consts[t.name]
        except KeyError:
            raise EvaluationError(f"constant {t.name!r} has no value") from None

    def _eval(self, phi: Formula, env: dict[str, int]) -> bool:
        A = self.A
        if isinstance(phi, Atom):
            if not A.vocab.has_relation(phi.rel):
                raise EvaluationError(f"relation {phi.rel!r} not in structure vocabulary")
            return A.has(phi.rel, tuple(self._resolve(t, env) for t in phi.args))
        if isinstance(phi, Eq):
            return self._resolve(phi.left, env) == self._resolve(phi.right, env)
        if isinstance(phi, Not):
            return not self._eval(phi.sub, env)
        if isinstance(phi, And):
            return all(self._eval(f, env) for f in phi.items)
        if isinstance(phi, Or):
            return any(self._eval(f, env) for f in phi.items)
        if isinstance(phi, Implies):
            return not self._eval(phi.left, env) or self._eval(phi.right, env)
        if isinstance(phi, Exists):
            names, body = _block(phi, Exists)
            return self._search(names, body, env, True)
        if isinstance(phi, Forall):
            names, body = _block(phi, Forall)
            return not self._search(names, body, env, False)
        raise TypeError(f"not a formula: {phi!r}")

    def _search(self, names: tuple[str, ...], body: Formula, env: dict[str, int], want: bool) -> bool:
        """Find an assignment of ``names`` with eval(body) == want."""
        atoms, cons = self._requirements(body, want)
        if self.A.leq_natural and cons:
            if order_unsat(self._ground_constraints(cons, env)):
                return False
        # guided enumeration from a required sparse atom binding new variables
        best = None
        best_size = None
        for atom in atoms:
            ok = True
            binds = False
            for t in atom.args:
                if isinstance(t, Var) and t.name not in env:
                    if t.name in names:
                        binds = True
                    else:
                        ok = False  # mentions a variable from an inner scope
                        break
            if ok and binds:
                size = self.A.table_size(atom.rel)
                if best is None or size < best_size:
                    best, best_size = atom, size
        if best is not None:
            return self._search_atom(best, names, body, env, want)
        name = names[0]
        rest = names[1:]
        lo, hi = 1, self.A.size
        if self.A.leq_natural:
            lo, hi = self._bounds(name, cons, env)
        found = False
        for val in range(lo, hi + 1):
            env[name] = val
            if rest:
                found = self._search(rest, body, env, want)
            else:
                found = self._eval(body, env) == want
            if found:
                break
        del env[name]
        return found

    def _search_atom(self, atom: Atom, names, body, env, want) -> bool:
        bound_vals: list[tuple[int, int]] = []
        new_pos: list[tuple[int, str]] = []
        for i, t in enumerate(atom.args):
            if isinstance(t, Const) or t.name in env:
                bound_vals.append((i, self._resolve(t, env)))
            else:
                new_pos.append((i, t.name))
        candidates = self._matches(atom.rel, bound_vals)
        found = False
        for tup in candidates:
            binding: dict[str, int] = {}
            ok = True
            for i, name in new_pos:
                val = tup[i]
                if binding.get(name, val) != val:
                    ok = False
                    break
                binding[name] = val
            if not ok:
                continue
            env.update(binding)
            rest = tuple(n for n in names if n not in binding)
            if rest:
                found = self._search(rest, body, env, want)
            else:
                found = self._eval(body, env) == want
            for name in binding:
                del env[name]
            if found:
                return True
        return False

    def _matches(self, rel: str, bound: list[tuple[int, int]]) -> Iterator[tuple[int, ...]]:
        table = self.A.tables.get(rel, frozenset())
        if not bound:
            return iter(table)
        pos, val = bound[0]
        index = self._indexes.get((rel, pos))
        if index is None:
            index = {}
            for tup in table:
                index.setdefault(tup[pos], []).append(tup)
            self._indexes[(rel, pos)] = index
        rest = bound[1:]
        cands = index.get(val, ())
        if not rest:
            return iter(cands)
        return (t for t in cands if all(t[i] == v for i, v in rest))

    def _bounds(self, name: str, cons, env) -> tuple[int, int]:
        lo, hi = 1, self.A.size
        for kind, a, b in cons:
            strict = kind == "lt"
            if kind not in ("le", "lt", "eq"):
                continue
            aval = self._cons_value(a, env)
            bval = self._cons_value(b, env)
            if kind == "eq":
                if a == name and bval is not None:
                    lo, hi = max(lo, bval), min(hi, bval)
                if b == name and aval is not None:
                    lo, hi = max(lo, aval), min(hi, aval)
                continue
            if a == name and bval is not None:
                hi = min(hi, bval - 1 if strict else bval)
            if b == name and aval is not None:
                lo = max(lo, aval + 1 if strict else aval)
        return lo, hi

    def _cons_value(self, term, env) -> int | None:
        if isinstance(term, int):
            return term
        if isinstance(term, str):
            return env.get(term)
        return None

    def _ground_constraints(self, cons, env) -> list[Constraint]:
        out = []
        for kind, a, b in cons:
            ga = env.get(a, a) if isinstance(a, str) else a
            gb = env.get(b, b) if isinstance(b, str) else b
            out.append((kind, ga, gb))
        return out

    def _requirements(self, body: Formula, want: bool):
        """Atoms/constraints every assignment achieving ``want`` must satisfy."""
        key = (id(body), want)
        cached = self._reqs.get(key)
        if cached is not None and cached[0] is body:
            return cached[1], cached[2]
        atoms: list[Atom] = []
        cons: list[Constraint] = []

        def term_key(t: Term):
            if isinstance(t, Var):
                return t.name
            return ("const", t.name)

        def support(f: Formula) -> None:
            if isinstance(f, And):
                for x in f.items:
                    support(x)
            elif isinstance(f, Atom):
                if f.rel == ORDER:
                    cons.append(("le", term_key(f.args[0]), term_key(f.args[1])))
                else:
                    atoms.append(f)
            elif isinstance(f, Eq):
                cons.append(("eq", term_key(f.left), term_key(f.right)))
            elif isinstance(f, Not):
                counter(f.sub)

        def counter(f: Formula) -> None:
            # conditions any *falsifying* assignment must satisfy
            if isinstance(f, Or):
                for x in f.items:
                    counter(x)
            elif isinstance(f, Implies):
                support(f.left)
                counter(f.right)
            elif isinstance(f, Not):
                support(f.sub)
            elif isinstance(f, Atom) and f.rel == ORDER:
                cons.append(("lt", term_key(f.args[1]), term_key(f.args[0])))
            elif isinstance(f, Eq):
                cons.append(("ne", term_key(f.left), term_key(f.right)))

        (support if want else counter)(body)
        # resolve constant terms to their values lazily at use sites is not
        # possible for the unsat check, so substitute them here
        resolved: list[Constraint] = []
        for kind, a, b in cons:
            if isinstance(a, tuple):
                a = self.A.consts.get(a[1])
                if a is None:
                    continue
            if isinstance(b, tuple):
                b = self.A.consts.get(b[1])
                if b is None:
                    continue
            resolved.append((kind, a, b))
        self._reqs[key] = (body, tuple(atoms), tuple(resolved))
        return tuple(atoms), tuple(resolved)


def _block(phi: Formula, node) -> tuple[tuple[str, ...], Formula]:
    names: list[str] = []
    while isinstance(phi, node):
        if phi.var in names:
            names.remove(phi.var)  # outer binding is shadowed, keep innermost
        names.append(phi.var)
        phi = phi.body
    return tuple(names), phi


def evaluate(structure: Structure, phi: Formula, env: Assignment | None = None) -> bool:
    """Standard satisfaction, quantifiers ranging over 1..size."""
    return Evaluator(structure).evaluate(phi, env)


# -- relativization ------------------------------------------------------------


def relativize(phi: Formula, x: str, y: str) -> Formula:
    """Bound every quantifier of ``phi`` to the order interval [x, y] and
    conjoin ``x <= y``.

    Existential bodies are guarded conjunctively, universal bodies by
    implication.  Bound variables clashing with x or y are renamed first;
    x or y occurring free in ``phi`` is an error.
    """
    if {x, y} & set(free_vars(phi)):
        raise FormulaError(f"{x!r}/{y!r} occur free in the formula")
    phi = rename_bound(phi, frozenset({x, y}))
    vx, vy = Var(x), Var(y)

    def star(f: Formula) -> Formula:
        if isinstance(f, (Atom, Eq)):
            return f
        if isinstance(f, Not):
            return Not(star(f.sub))
        if isinstance(f, And):
            return And(tuple(star(i) for i in f.items))
        if isinstance(f, Or):
            return Or(tuple(star(i) for i in f.items))
        if isinstance(f, Implies):
            return Implies(star(f.left), star(f.right))
        guard = conj(leq(vx, Var(f.var)), leq(Var(f.var), vy))
        if isinstance(f, Exists):
            return Exists(f.var, conj(guard, star(f.body)))
        if isinstance(f, Forall):
            return Forall(f.var, Implies(guard, star(f.body)))
        raise TypeError(f"not a formula: {f!r}")

    return conj(leq(vx, vy), star(phi))


# -- prenex normal form and classification --------------------------------------


@dataclass(frozen=True)
class PrefixClass:
    """Sigma/Pi classification of a prenex formula.

    ``kind`` is "sigma" or "pi" (None for quantifier-free), ``blocks`` the
    number of maximal same-quantifier runs, ``width`` the largest run length.
    """

    kind: str | None
    blocks: int
    width: int

    def __str__(self) -> str:
        if self.blocks == 0:
            return "quantifier-free"
        name = "Sigma" if self.kind == "sigma" else "Pi"
        return f"{name}_{self.blocks} (width {self.width})"


_EX, _ALL = "E", "A"


def to_pnf(phi: Formula) -> Formula:
    """Equivalent prenex formula.

    Implications are rewritten, negations pushed to the matrix, and at each
    conjunction/disjunction the children's prefixes are merged greedily so
    runs of like quantifiers coalesce; the merge start polarity is chosen to
    minimize the number of blocks.
    """
    taken = set(free_vars(phi)) | set(bound_vars(phi))
    counter = [0]

    def fresh(base: str) -> str:
        while True:
            counter[0] += 1
            cand = f"{base}{counter[0]}"
            if cand not in taken:
                taken.add(cand)
                return cand

    def walk(f: Formula):  # -> (prefix: list[(q, var)], matrix)
        if isinstance(f, (Atom, Eq)):
            return [], f
        if isinstance(f, Not):
            prefix, matrix = walk(f.sub)
            flipped = [(_ALL if q == _EX else _EX, v) for q, v in prefix]
            return flipped, Not(matrix)
        if isinstance(f, Implies):
            return walk(Or((Not(f.left), f.right)))
        if isinstance(f, (And, Or)):
            parts = [walk(i) for i in f.items]
            renamed = []
            seen: set[str] = set(free_vars(f))
            for prefix, matrix in parts:
                ren: dict[str, str] = {}
                out_prefix = []
                for q, v in prefix:
                    if v in seen:
                        nv = fresh(v)
                        ren[v] = nv
                        v = nv
                    seen.add(v)
                    out_prefix.append((q, v))
                if ren:
                    matrix = _rename_free(matrix, ren)
                renamed.append((out_prefix, matrix))
            merged = _merge_prefixes([p for p, _ in renamed])
            matrices = tuple(m for _, m in renamed)
            return merged, (And(matrices) if isinstance(f, And) else Or(matrices))
        if isinstance(f, (Exists, Forall)):
            prefix, matrix = walk(f.body)
            q = _EX if isinstance(f, Exists) else _ALL
            return [(q, f.var)] + prefix, matrix
        raise TypeError(f"not a formula: {f!r}")

    prefix, matrix = walk(phi)
    out = matrix
    for q, v in reversed(prefix):
        out = Exists(v, out) if q == _EX else Forall(v, out)
    return out


def _rename_free(phi: Formula, ren: dict[str, str]) -> Formula:
    """Rename free variable occurrences (new names assumed globally fresh)."""
    if isinstance(phi, Atom):
        return Atom(phi.rel, tuple(Var(ren.get(t.name, t.name)) if isinstance(t, Var) else t for t in phi.args))
    if isinstance(phi, Eq):
        def t(x: Term) -> Term:
            return Var(ren.get(x.name, x.name)) if isinstance(x, Var) else x
        return Eq(t(phi.left), t(phi.right))
    if isinstance(phi, Not):
        return Not(_rename_free(phi.sub, ren))
    if isinstance(phi, And):
        return And(tuple(_rename_free(i, ren) for i in phi.items))
    if isinstance(phi, Or):
        return Or(tuple(_rename_free(i, ren) for i in phi.items))
    if isinstance(phi, Implies):
        return Implies(_rename_free(phi.left, ren), _rename_free(phi.right, ren))
    if isinstance(phi, (Exists, Forall)):
        inner = {k: v for k, v in ren.items() if k != phi.var}
        node = Exists if isinstance(phi, Exists) else Forall
        return node(phi.var, _rename_free(phi.body, inner) if inner else phi.body)
    raise TypeError(f"not a formula: {phi!r}")


def _merge_prefixes(prefixes: list[list[tuple[str, str]]]) -> list[tuple[str, str]]:
    """Interleave child prefixes, merging like-polarity runs greedily and
    choosing the start polarity that yields fewer blocks."""
    runs: list[list[tuple[str, int]]] = []  # per child: [(quant, run length)]
    for p in prefixes:
        r: list[tuple[str, int]] = []
        for q, _ in p:
            if r and r[-1][0] == q:
                r[-1] = (q, r[-1][1] + 1)
            else:
                r.append((q, 1))
        runs.append(r)

    def simulate(start: str) -> int:
        pos = [0] * len(runs)
        polarity = start
        blocks = 0
        while any(pos[i] < len(runs[i]) for i in range(len(runs))):
            consumed = False
            for i in range(len(runs)):
                if pos[i] < len(runs[i]) and runs[i][pos[i]][0] == polarity:
                    pos[i] += 1
                    consumed = True
            if consumed:
                blocks += 1
            polarity = _ALL if polarity == _EX else _EX
        return blocks

    if all(not r for r in runs):
        return []
    start = _EX if simulate(_EX) <= simulate(_ALL) else _ALL
    out: list[tuple[str, str]] = []
    pos = [0] * len(prefixes)
    ridx = [0] * len(prefixes)
    polarity = start
    while any(ridx[i] < len(runs[i]) for i in range(len(runs))):
        for i, p in enumerate(prefixes):
            if ridx[i] < len(runs[i]) and runs[i][ridx[i]][0] == polarity:
                q, length = runs[i][ridx[i]]
                out.extend(p[pos[i] : pos[i] + length])
                pos[i] += length
                ridx[i] += 1
        polarity = _ALL if polarity == _EX else _EX
    return out


def classify_prefix(phi: Formula) -> PrefixClass:
    """Classify a prenex formula by its quantifier prefix."""
    runs: list[tuple[str, int]] = []
    node = phi
    while isinstance(node, (Exists, Forall)):
        q = _EX if isinstance(node, Exists) else _ALL
        if runs and runs[-1][0] == q:
            runs[-1] = (q, runs[-1][1] + 1)
        else:
            runs.append((q, 1))
        node = node.body
    if _has_quantifier(node):
        raise NotPrenexError("matrix contains quantifiers")
    if not runs:
        return PrefixClass(None, 0, 0)
    kind = "sigma" if runs[0][0] == _EX else "pi"
    return PrefixClass(kind, len(runs), max(length for _, length in runs))


def _has_quantifier(phi: Formula) -> bool:
    if isinstance(phi, (Exists, Forall)):
        return True
    if isinstance(phi, Not):
        return _has_quantifier(phi.sub)
    if isinstance(phi, (And, Or)):
        return any(_has_quantifier(i) for i in phi.items)
    if isinstance(phi, Implies):
        return _has_quantifier(phi.left) or _has_quantifier(phi.right)
    return False
