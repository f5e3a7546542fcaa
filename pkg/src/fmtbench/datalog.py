"""Datalog with negation restricted to extensional atoms and (in)equalities.

Least fixpoints are computed by semi-naive iteration.  The engine is bound
to one structure at a time; plans are compiled per rule with literals
reordered greedily so binding literals come first.  On structures whose
order is natural, order literals become integer range generators or checks,
and rules whose order constraints are unsatisfiable over a linear order are
discarded up front.

``goal_holds`` runs the same engine with sound early termination: since
derivations are monotone, it stops as soon as some goal rule body is
satisfiable in the current database.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from ._difference import order_unsat
from .structures import ORDER, Structure, Vocabulary

EQ = "="
DOM = "Dom"  # built-in unary predicate holding 1..size

Term = "str | int"  # variable name or concrete index


class DatalogError(ValueError):
    pass


class ProgramParseError(DatalogError):
    pass


class ProgramValidationError(DatalogError):
    def __init__(self, violations: "list[Violation]"):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class Literal:
    pred: str
    args: tuple[Term, ...]
    negated: bool = False

    def __str__(self) -> str:
        if self.pred in (EQ, ORDER):
            a, b = self.args
            if self.pred == EQ:
                op = "!=" if self.negated else "="
                return f"{a} {op} {b}"
            body = f"{a} <= {b}"
            return f"not {body}" if self.negated else body
        body = self.pred if not self.args else f"{self.pred}({', '.join(map(str, self.args))})"
        return f"not {body}" if self.negated else body

    def variables(self) -> tuple[str, ...]:
        return tuple(a for a in self.args if isinstance(a, str))


@dataclass(frozen=True)
class Rule:
    head_pred: str
    head_args: tuple[Term, ...]
    body: tuple[Literal, ...]

    def __str__(self) -> str:
        head = self.head_pred if not self.head_args else f"{self.head_pred}({', '.join(map(str, self.head_args))})"
        if not self.body:
            return head
        return f"{head} :- {', '.join(str(l) for l in self.body)}"


@dataclass(frozen=True)
class Violation:
    rule_index: int
    literal_index: int | None
    message: str

    def __str__(self) -> str:
        where = f"rule {self.rule_index}"
        if self.literal_index is not None:
            where += f", literal {self.literal_index}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class DatalogProgram:
    extensional: Vocabulary
    intensional: tuple[tuple[str, int], ...]
    goal: str
    rules: tuple[Rule, ...]

    def intensional_arity(self, name: str) -> int | None:
        for pred, arity in self.intensional:
            if pred == name:
                return arity
        return None


# -- validation ---------------------------------------------------------------


def violations(program: DatalogProgram) -> list[Violation]:
    """Structured rule violations: negation discipline, arities, safety."""
    out: list[Violation] = []
    idb = dict(program.intensional)
    edb = dict(program.extensional.relations)

    def arity_of(pred: str) -> int | None:
        if pred == EQ or pred == ORDER:
            return 2
        if pred == DOM:
            return 1
        if pred in idb:
            return idb[pred]
        if pred in edb:
            return edb[pred]
        return None

    for ri, rule in enumerate(program.rules):
        if rule.head_pred not in idb:
            out.append(Violation(ri, None, f"head {rule.head_pred!r} is not intensional"))
        elif len(rule.head_args) != idb[rule.head_pred]:
            out.append(Violation(ri, None, f"head arity mismatch for {rule.head_pred!r}"))
        bound: set[str] = set()
        for li, lit in enumerate(rule.body):
            expected = arity_of(lit.pred)
            if expected is None:
                out.append(Violation(ri, li, f"unknown predicate {lit.pred!r}"))
                continue
            if len(lit.args) != expected:
                out.append(Violation(ri, li, f"arity mismatch for {lit.pred!r}"))
            if lit.negated and lit.pred in idb:
                out.append(Violation(ri, li, f"negated intensional atom {lit.pred!r}"))
            if not lit.negated and lit.pred != EQ:
                bound.update(lit.variables())
        # positive equalities propagate boundness
        changed = True
        while changed:
            changed = False
            for lit in rule.body:
                if lit.pred == EQ and not lit.negated:
                    a, b = lit.args
                    for x, y in ((a, b), (b, a)):
                        if (isinstance(x, int) or x in bound) and isinstance(y, str) and y not in bound:
                            bound.add(y)
                            changed = True
        for v in rule.head_args:
            if isinstance(v, str) and v not in bound:
                out.append(Violation(ri, None, f"head variable {v!r} not bound by a positive literal"))
        for li, lit in enumerate(rule.body):
            if lit.negated or lit.pred == EQ:
                for v in lit.variables():
                    if v not in bound:
                        out.append(Violation(ri, li, f"variable {v!r} in {lit.pred!r} literal never bound"))
    return out


def validate(program: DatalogProgram) -> bool:
    """True iff the program satisfies the negation and safety discipline."""
    return not violations(program)


# -- concrete syntax ----------------------------------------------------------


def parse_program(text: str) -> DatalogProgram:
    """Parse the program format: ``.extensional N/a``, ``.intensional N/a``,
    ``.goal N`` directives and one ``Head :- Lit, ...`` rule per line."""
    relations: list[tuple[str, int]] = []
    intensional: list[tuple[str, int]] = []
    goal: str | None = None
    rules: list[Rule] = []

    def parse_atom(chunk: str, ln: int) -> tuple[str, tuple[Term, ...]]:
        chunk = chunk.strip()
        if "(" in chunk:
            if not chunk.endswith(")"):
                raise ProgramParseError(f"line {ln}: malformed atom {chunk!r}")
            name, rest = chunk.split("(", 1)
            args = tuple(_term(a.strip(), ln) for a in rest[:-1].split(","))
            return name.strip(), args
        return chunk, ()

    def _term(tok: str, ln: int) -> Term:
        if not tok:
            raise ProgramParseError(f"line {ln}: empty term")
        if tok.lstrip("-").isdigit():
            return int(tok)
        return tok

    def parse_literal(chunk: str, ln: int) -> Literal:
        chunk = chunk.strip()
        negated = False
        if chunk.startswith("not "):
            negated = True
            chunk = chunk[4:].strip()
        if "!=" in chunk:
            a, b = chunk.split("!=", 1)
            return Literal(EQ, (_term(a.strip(), ln), _term(b.strip(), ln)), not negated)
        if "<=" in chunk:
            a, b = chunk.split("<=", 1)
            return Literal(ORDER, (_term(a.strip(), ln), _term(b.strip(), ln)), negated)
        if "=" in chunk and "(" not in chunk.split("=", 1)[0]:
            a, b = chunk.split("=", 1)
            return Literal(EQ, (_term(a.strip(), ln), _term(b.strip(), ln)), negated)
        pred, args = parse_atom(chunk, ln)
        return Literal(pred, args, negated)

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".extensional") or line.startswith(".intensional"):
            kind, _, decl = line.partition(" ")
            decl = decl.strip()
            if "/" not in decl:
                raise ProgramParseError(f"line {ln}: expected Name/arity in {line!r}")
            name, _, arity = decl.partition("/")
            try:
                pair = (name.strip(), int(arity))
            except ValueError:
                raise ProgramParseError(f"line {ln}: bad arity in {line!r}") from None
            (relations if kind == ".extensional" else intensional).append(pair)
        elif line.startswith(".goal"):
            goal = line.split(None, 1)[1].strip()
        elif ":-" in line:
            head_text, body_text = line.split(":-", 1)
            head_pred, head_args = parse_atom(head_text.rstrip(". "), ln)
            body_text = body_text.rstrip(". ")
            body = tuple(parse_literal(c, ln) for c in _split_literals(body_text, ln))
            rules.append(Rule(head_pred, head_args, body))
        else:
            head_pred, head_args = parse_atom(line.rstrip(". "), ln)
            rules.append(Rule(head_pred, head_args, ()))
    if goal is None:
        raise ProgramParseError("missing .goal directive")
    return DatalogProgram(Vocabulary(tuple(relations)), tuple(intensional), goal, tuple(rules))


def _split_literals(text: str, ln: int) -> list[str]:
    parts: list[str] = []
    depth = 0
    cur: list[str] = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ProgramParseError(f"line {ln}: unbalanced parentheses")
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise ProgramParseError(f"line {ln}: unbalanced parentheses")
    parts.append("".join(cur))
    return [p for p in parts if p.strip()]


def program_to_text(program: DatalogProgram) -> str:
    lines = [f".extensional {n}/{a}" for n, a in program.extensional.relations]
    lines += [f".intensional {n}/{a}" for n, a in program.intensional]
    lines.append(f".goal {program.goal}")
    lines += [str(rule) for rule in program.rules]
    return "\n".join(lines) + "\n"


# -- evaluation ---------------------------------------------------------------

_CHECK_EVERY = 4096


class _Engine:
    def __init__(self, program: DatalogProgram, a: Structure):
        bad = violations(program)
        if bad:
            raise ProgramValidationError(bad)
        for name, arity in program.extensional.relations:
            if not a.vocab.has_relation(name) or a.vocab.arity(name) != arity:
                raise DatalogError(f"structure does not interpret extensional {name}/{arity}")
        self.program = program
        self.A = a
        self.natural = a.leq_natural
        self.idb: dict[str, set[tuple[int, ...]]] = {n: set() for n, _ in program.intensional}
        self._indexes: dict[tuple[str, int], dict[int, list]] = {}
        self.rules = [r for r in program.rules if not self._provably_empty(r)]
        self._full_plans = [self._plan(r, None) for r in self.rules]
        self._delta_plans: list[list[tuple[int, list]]] = []
        idb_names = set(self.idb)
        for i, rule in enumerate(self.rules):
            variants = []
            for li, lit in enumerate(rule.body):
                if not lit.negated and lit.pred in idb_names:
                    variants.append((li, self._plan(rule, li)))
            self._delta_plans.append(variants)

    # .. setup ..

    def _provably_empty(self, rule: Rule) -> bool:
        if not self.natural:
            return False
        cons = []
        for lit in rule.body:
            if lit.pred == ORDER:
                a, b = lit.args
                cons.append(("lt", b, a) if lit.negated else ("le", a, b))
            elif lit.pred == EQ:
                a, b = lit.args
                cons.append(("ne", a, b) if lit.negated else ("eq", a, b))
        return bool(cons) and order_unsat(cons)

    def _plan(self, rule: Rule, delta_idx: int | None) -> list:
        """Greedy join order; steps consumed by _run.  Boundness is static."""
        steps: list[tuple] = []
        bound: set[str] = set()
        remaining = list(range(len(rule.body)))

        def scan_step(lit: Literal, delta: bool) -> tuple:
            bound_pos = []
            free_pos = []
            for i, t in enumerate(lit.args):
                if isinstance(t, int) or t in bound:
                    bound_pos.append((i, t))
                else:
                    free_pos.append((i, t))
            for _, v in free_pos:
                bound.add(v)
            return ("scan", lit.pred, tuple(bound_pos), tuple(free_pos), delta)

        if delta_idx is not None:
            steps.append(scan_step(rule.body[delta_idx], True))
            remaining.remove(delta_idx)

        def ready(lit: Literal) -> bool:
            return all(isinstance(t, int) or t in bound for t in lit.args)

        while remaining:
            # 1) anything fully bound becomes a constant-time check
            placed = None
            for li in remaining:
                lit = rule.body[li]
                if ready(lit):
                    steps.append(("check", lit))
                    placed = li
                    break
            if placed is not None:
                remaining.remove(placed)
                continue
            # 2) positive equality with one side bound assigns the other
            for li in remaining:
                lit = rule.body[li]
                if lit.pred == EQ and not lit.negated:
                    a, b = lit.args
                    for x, y in ((a, b), (b, a)):
                        if (isinstance(x, int) or x in bound) and isinstance(y, str) and y not in bound:
                            steps.append(("assign", y, x))
                            bound.add(y)
                            placed = li
                            break
                if placed is not None:
                    break
            if placed is not None:
                remaining.remove(placed)
                continue
            # 3) positive relation scans, bound args first
            best = None
            best_key = None
            for li in remaining:
                lit = rule.body[li]
                if lit.negated or lit.pred in (EQ, DOM):
                    continue
                if lit.pred == ORDER and self.natural:
                    continue
                n_bound = sum(1 for t in lit.args if isinstance(t, int) or t in bound)
                key = (-n_bound, li)
                if best is None or key < best_key:
                    best, best_key = li, key
            if best is not None:
                steps.append(scan_step(rule.body[best], False))
                remaining.remove(best)
                continue
            # 4) natural order literal generating a range
            for li in remaining:
                lit = rule.body[li]
                if lit.pred == ORDER and self.natural and not lit.negated:
                    a, b = lit.args
                    a_ok = isinstance(a, int) or a in bound
                    b_ok = isinstance(b, int) or b in bound
                    if a_ok and not b_ok:
                        steps.append(("range", b, a, None))
                        bound.add(b)
                        placed = li
                    elif b_ok and not a_ok:
                        steps.append(("range", a, None, b))
                        bound.add(a)
                        placed = li
                    if placed is not None:
                        break
            if placed is not None:
                remaining.remove(placed)
                continue
            # 5) domain scan
            for li in remaining:
                lit = rule.body[li]
                if lit.pred == DOM and not lit.negated:
                    (v,) = lit.args
                    steps.append(("range", v, None, None))
                    bound.add(v)
                    placed = li
                    break
            if placed is not None:
                remaining.remove(placed)
                continue
            # 6) natural order literal with both sides free
            for li in remaining:
                lit = rule.body[li]
                if lit.pred == ORDER and self.natural and not lit.negated:
                    a, b = lit.args
                    steps.append(("range", a, None, None))
                    bound.add(a)
                    steps.append(("range", b, a, None))
                    bound.add(b)
                    placed = li
                    break
            if placed is None:
                raise DatalogError(f"cannot order body of rule: {rule}")
            remaining.remove(placed)
        return steps

    # .. table access ..

    def _tuples(self, pred: str) -> Iterable[tuple[int, ...]]:
        if pred in self.idb:
            return self.idb[pred]
        return self.A.tables.get(pred, frozenset())

    def _index(self, pred: str, pos: int) -> dict[int, list]:
        key = (pred, pos)
        idx = self._indexes.get(key)
        if idx is None:
            idx = {}
            for tup in self._tuples(pred):
                idx.setdefault(tup[pos], []).append(tup)
            self._indexes[key] = idx
        return idx

    def _insert(self, pred: str, tup: tuple[int, ...], sink: dict[str, list]) -> bool:
        table = self.idb[pred]
        if tup in table:
            return False
        table.add(tup)
        sink[pred].append(tup)
        for (p, pos), idx in self._indexes.items():
            if p == pred:
                idx.setdefault(tup[pos], []).append(tup)
        return True

    def _holds(self, lit: Literal, env: dict[str, int]) -> bool:
        vals = tuple(t if isinstance(t, int) else env[t] for t in lit.args)
        if lit.pred == EQ:
            result = vals[0] == vals[1]
        elif lit.pred == ORDER:
            result = self.A.leq(vals[0], vals[1])
        elif lit.pred == DOM:
            result = 1 <= vals[0] <= self.A.size
        elif lit.pred in self.idb:
            result = vals in self.idb[lit.pred]
        else:
            result = self.A.has(lit.pred, vals)
        return result != lit.negated

    # .. join execution ..

    def _run(self, steps: list, i: int, env: dict[str, int], delta_tuples: list | None) -> Iterator[None]:
        if i == len(steps):
            yield
            return
        step = steps[i]
        kind = step[0]
        if kind == "check":
            if self._holds(step[1], env):
                yield from self._run(steps, i + 1, env, delta_tuples)
            return
        if kind == "assign":
            _, var, src = step
            env[var] = src if isinstance(src, int) else env[src]
            yield from self._run(steps, i + 1, env, delta_tuples)
            del env[var]
            return
        if kind == "range":
            _, var, lo_t, hi_t = step
            lo = 1 if lo_t is None else (lo_t if isinstance(lo_t, int) else env[lo_t])
            hi = self.A.size if hi_t is None else (hi_t if isinstance(hi_t, int) else env[hi_t])
            for val in range(lo, hi + 1):
                env[var] = val
                yield from self._run(steps, i + 1, env, delta_tuples)
            env.pop(var, None)
            return
        # scan
        _, pred, bound_pos, free_pos, use_delta = step
        if use_delta:
            source: Iterable = delta_tuples or ()
            bound_vals = [(p, t if isinstance(t, int) else env[t]) for p, t in bound_pos]
            candidates = (tup for tup in source if all(tup[p] == v for p, v in bound_vals))
        elif bound_pos:
            p0, t0 = bound_pos[0]
            v0 = t0 if isinstance(t0, int) else env[t0]
            cands = self._index(pred, p0).get(v0, ())
            if pred in self.idb:
                cands = list(cands)  # inserts may grow the index mid-scan
            rest = [(p, t if isinstance(t, int) else env[t]) for p, t in bound_pos[1:]]
            candidates = (tup for tup in cands if all(tup[p] == v for p, v in rest)) if rest else iter(cands)
        else:
            source = self._tuples(pred)
            candidates = iter(list(source)) if pred in self.idb else iter(source)
        names = [v for _, v in free_pos]
        for tup in candidates:
            ok = True
            seen: dict[str, int] = {}
            for p, v in free_pos:
                val = tup[p]
                if seen.get(v, val) != val:
                    ok = False
                    break
                seen[v] = val
            if not ok:
                continue
            env.update(seen)
            yield from self._run(steps, i + 1, env, delta_tuples)
        for v in names:
            env.pop(v, None)

    def _apply(self, rule: Rule, steps: list, delta_tuples: list | None, sink: dict[str, list], stop_check=None) -> bool:
        """Run one rule; insert derived head tuples.  Returns True if the
        stop_check fired."""
        head_args = rule.head_args
        pred = rule.head_pred
        env: dict[str, int] = {}
        tail = self._rectangle_tail(steps, head_args)
        if tail is not None:
            cut, u_term, v_term = tail
            triggers: list[tuple[int, int]] = []
            for _ in self._run(steps[:cut], 0, env, delta_tuples):
                triggers.append((env[u_term] if isinstance(u_term, str) else u_term,
                                 env[v_term] if isinstance(v_term, str) else v_term))
            return self._emit_rectangles(pred, triggers, sink, stop_check)
        count = 0
        for _ in self._run(steps, 0, env, delta_tuples):
            tup = tuple(t if isinstance(t, int) else env[t] for t in head_args)
            if self._insert(pred, tup, sink):
                count += 1
                if stop_check is not None and count % _CHECK_EVERY == 0 and stop_check():
                    return True
        return False

    def _rectangle_tail(self, steps: list, head_args) -> tuple | None:
        """Detect plans ending in two one-sided ranges that directly feed a
        binary head: [..., x in [1..u], y in [v..size]] with head (x, y).
        Such rules (interval-closure rules) would otherwise re-derive heavily
        overlapping rectangles; _emit_rectangles generates their union."""
        if len(steps) < 2 or len(head_args) != 2:
            return None
        s1, s2 = steps[-2], steps[-1]
        if s1[0] != "range" or s2[0] != "range":
            return None
        _, x_var, x_lo, x_hi = s1
        _, y_var, y_lo, y_hi = s2
        if (head_args[0], head_args[1]) != (x_var, y_var):
            return None
        if x_lo is None and x_hi is not None and y_lo is not None and y_hi is None:
            if y_lo == x_var or x_hi == y_var:
                return None
            return (len(steps) - 2, x_hi, y_lo)
        return None

    def _emit_rectangles(self, pred: str, triggers: list[tuple[int, int]], sink: dict[str, list], stop_check) -> bool:
        """Insert the union of rectangles [1..u] x [v..size] without
        regenerating overlaps within the batch."""
        if not triggers:
            return False
        size = self.A.size
        triggers.sort()
        count = 0
        prev_u = 0
        # for x in (u_{j-1}, u_j], the admissible y form [min_{i>=j} v_i, size]
        suffix: list[tuple[int, int]] = []
        best = size + 1
        for u, v in reversed(triggers):
            best = min(best, v)
            suffix.append((u, best))
        suffix.reverse()
        for u, vmin in suffix:
            for x in range(prev_u + 1, u + 1):
                for y in range(vmin, size + 1):
                    if self._insert(pred, (x, y), sink):
                        count += 1
                        if stop_check is not None and count % _CHECK_EVERY == 0 and stop_check():
                            return True
            prev_u = u
        return False

    # .. driver ..

    def run(self, stop_at_goal: bool = False, naive: bool = False) -> bool:
        """Compute the fixpoint; with stop_at_goal, return as soon as the
        goal is derivable (sound: derivations are monotone).  Returns
        whether the goal was derived."""
        goal = self.program.goal
        goal_rules = [i for i, r in enumerate(self.rules) if r.head_pred == goal]

        def goal_satisfiable() -> bool:
            if self.idb.get(goal):
                return True
            for i in goal_rules:
                env: dict[str, int] = {}
                if next(self._run(self._full_plans[i], 0, env, None), _SENTINEL) is None:
                    return True
            return False

        stop_check = goal_satisfiable if stop_at_goal else None

        deltas: dict[str, list] = {name: [] for name in self.idb}
        for i, rule in enumerate(self.rules):
            if self._apply(rule, self._full_plans[i], None, deltas, stop_check):
                return True
            if stop_check is not None and stop_check():
                return True
        while any(deltas.values()):
            new_deltas: dict[str, list] = {name: [] for name in self.idb}
            if naive:
                for i, rule in enumerate(self.rules):
                    if self._apply(rule, self._full_plans[i], None, new_deltas, stop_check):
                        return True
            else:
                for i, rule in enumerate(self.rules):
                    for li, plan in self._delta_plans[i]:
                        dt = deltas.get(rule.body[li].pred)
                        if not dt:
                            continue
                        if self._apply(rule, plan, dt, new_deltas, stop_check):
                            return True
            if stop_check is not None and stop_check():
                return True
            deltas = new_deltas
        return bool(self.idb.get(goal))


_SENTINEL = object()


def eval_fixpoint(program: DatalogProgram, a: Structure, naive: bool = False) -> dict[str, frozenset]:
    """The least model: every intensional predicate's table, fully
    materialized.  Intended for desk-scale structures; the goal query at
    paper scale should use goal_holds, which terminates early."""
    engine = _Engine(program, a)
    engine.run(naive=naive)
    return {name: frozenset(table) for name, table in engine.idb.items()}


def goal_holds(program: DatalogProgram, a: Structure) -> bool:
    """True iff the 0-ary goal predicate is derived."""
    if program.intensional_arity(program.goal) != 0:
        raise DatalogError(f"goal {program.goal!r} is not 0-ary")
    engine = _Engine(program, a)
    return engine.run(stop_at_goal=True)


# -- extension-closure fuzzing --------------------------------------------------


@dataclass
class ExtensionCheckReport:
    trials: int
    failures: list[tuple[int, Structure]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_extension_closed_sample(
    program: DatalogProgram,
    a: Structure,
    trials: int,
    rng_seed: int,
) -> ExtensionCheckReport:
    """Sample random extensions of a structure whose goal holds and check the
    goal still holds on each (it must, since the defined query is closed
    under extensions; a failure indicates an engine bug)."""
    import random

    from .structures import random_extension

    if trials and not goal_holds(program, a):
        raise DatalogError("precondition: the goal must hold on the base structure")
    rng = random.Random(rng_seed)
    report = ExtensionCheckReport(trials=trials)
    for t in range(trials):
        ext = random_extension(a, rng, keep_order=rng.random() < 0.9)
        if not goal_holds(program, ext):
            report.failures.append((t, ext))
    return report
