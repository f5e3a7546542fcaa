"""Builders for the sentence families, Datalog programs and structure
families used throughout the verification suites.

Level-n structures come in quadruples: a totally-connected block (``tot``),
the same block with its central successor link removed (``gap``), and the
big satisfying / falsifying instances (``sat`` / ``unsat``) assembled from
them by ordered sums.  Default multiplicities follow the published
arithmetic; overrides shrink them for desk-scale experiments without ever
changing which block sits where.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from . import fo
from .datalog import DatalogProgram, Literal, Rule
from .fo import Atom, Const, Eq, Exists, Forall, Formula, Implies, Not, Or, Var, conj, disj, leq, lt
from .structures import (
    ORDER,
    Structure,
    Vocabulary,
    add_relation,
    minmax_expand,
    ordered_sum_seq,
)


class ConstructionError(ValueError):
    pass


def rho(n: int, k: int) -> int:
    """Threshold on summand counts above which ordered sums of pairwise
    game-interchangeable blocks are themselves interchangeable:
    rho(1, k) = 2k+2 and rho(n+1, k) = (k+2)(rho(n, k)+1)."""
    if n < 1 or k < 1:
        raise ConstructionError("rho requires n, k >= 1")
    value = 2 * k + 2
    for _ in range(n - 1):
        value = (k + 2) * (value + 1)
    return value


def sigma(n: int) -> Vocabulary:
    """The level-n vocabulary: <=, S, R plus S_j, R_j, P_j for 2 <= j <= n."""
    if n < 1:
        raise ConstructionError("level must be >= 1")
    rels: list[tuple[str, int]] = [(ORDER, 2), ("S", 2), ("R", 2)]
    for j in range(2, n + 1):
        rels += [(f"S{j}", 2), (f"R{j}", 2), (f"P{j}", 1)]
    return Vocabulary(tuple(rels))


# -- scale parameters ---------------------------------------------------------


@dataclass(frozen=True)
class ScaleParams:
    """Level, width and optional multiplicity overrides.

    Override keys: ``tot1_len`` (even, >= 4), ``tot_copies`` and ``N_copies``
    (odd, >= 3, applied at every level), ``gap_side`` and ``M_side``
    (>= 1, default half of the corresponding copy count).
    """

    n: int
    k: int
    overrides: tuple[tuple[str, int], ...] = ()

    _KEYS = ("tot1_len", "tot_copies", "N_copies", "gap_side", "M_side")

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1:
            raise ConstructionError("n and k must be >= 1")
        seen = dict(self.overrides)
        for key in seen:
            if key not in self._KEYS:
                raise ConstructionError(f"unknown override {key!r}; expected one of {self._KEYS}")
        object.__setattr__(self, "overrides", tuple(sorted(seen.items())))
        t = self.tot1_len()
        if t < 4 or t % 2:
            raise ConstructionError(f"tot1_len must be even and >= 4, got {t}")
        for level in range(1, self.n + 1):
            if level >= 2:
                c = self.tot_copies(level)
                if c < 3 or c % 2 == 0:
                    raise ConstructionError(f"tot_copies must be odd and >= 3, got {c}")
                if self.gap_side(level) < 1:
                    raise ConstructionError("gap_side must be >= 1")
            c = self.n_copies(level)
            if c < 3 or c % 2 == 0:
                raise ConstructionError(f"N_copies must be odd and >= 3, got {c}")
            if self.m_side(level) < 1:
                raise ConstructionError("M_side must be >= 1")

    @classmethod
    def of(cls, n: int, k: int, overrides: dict[str, int] | None = None) -> "ScaleParams":
        return cls(n, k, tuple(sorted((overrides or {}).items())))

    def _get(self, key: str) -> int | None:
        return dict(self.overrides).get(key)

    def tot1_len(self) -> int:
        return self._get("tot1_len") or 6 * (self.k + 2) ** 2

    def tot_copies(self, level: int) -> int:
        return self._get("tot_copies") or 4 * (self.k + 3) ** (2 * level) + 2 * self.k + 1

    def n_copies(self, level: int) -> int:
        return self._get("N_copies") or 4 * (self.k + 3) ** (2 * level + 1) + 2 * self.k + 1

    def gap_side(self, level: int) -> int:
        return self._get("gap_side") or (self.tot_copies(level) - 1) // 2

    def m_side(self, level: int) -> int:
        return self._get("M_side") or (self.n_copies(level) - 1) // 2


# -- structure families --------------------------------------------------------


def build_L(m: int) -> Structure:
    """Linear order of m elements with its full successor relation."""
    if m < 1:
        raise ConstructionError("L requires m >= 1")
    vocab = Vocabulary(((ORDER, 2), ("S", 2)))
    succ = frozenset((i, i + 1) for i in range(1, m))
    return Structure(vocab, m, {"S": succ}, {}, leq_natural=True)


def build_G(m: int) -> Structure:
    """build_L(m) with the central successor pair (ceil(m/2)-1, ceil(m/2))
    removed."""
    if m < 4:
        raise ConstructionError("G requires m >= 4")
    base = build_L(m)
    c = (m + 1) // 2
    succ = base.table("S") - {(c - 1, c)}
    return Structure(base.vocab, m, {"S": succ}, {}, leq_natural=True)


@lru_cache(maxsize=None)
def _quadruple(params: ScaleParams, level: int) -> tuple[Structure, Structure, Structure, Structure]:
    """(tot, gap, sat, unsat) at the given level over sigma(level)."""
    k = params.k
    if level == 1:
        m = params.tot1_len()
        vocab = sigma(1)
        succ = frozenset((i, i + 1) for i in range(1, m))
        tot = Structure(vocab, m, {"S": succ, "R": {(1, m)}}, {}, leq_natural=True)
        gap = Structure(
            vocab, m, {"S": succ - {(m // 2, m // 2 + 1)}, "R": {(1, m)}}, {}, leq_natural=True
        )
    else:
        _, _, prev_sat, prev_unsat = _quadruple(params, level - 1)
        sat_plus = _plus_expand(prev_sat, level)
        unsat_plus = _plus_expand(prev_unsat, level)
        copies = params.tot_copies(level)
        side = params.gap_side(level)
        tot = minmax_expand(ordered_sum_seq([sat_plus] * copies), binary=f"R{level}")
        gap = minmax_expand(
            ordered_sum_seq([sat_plus] * side + [unsat_plus] + [sat_plus] * side),
            binary=f"R{level}",
        )
    n_copies = params.n_copies(level)
    m_side = params.m_side(level)
    unsat = ordered_sum_seq([gap] * n_copies)
    sat = ordered_sum_seq([gap] * m_side + [tot] + [gap] * m_side)
    return tot, gap, sat, unsat


def _plus_expand(a: Structure, level: int) -> Structure:
    """Mark the extremes in P_level, link them in S_level, declare R_level."""
    out = minmax_expand(a, unary=f"P{level}", binary=f"S{level}")
    return add_relation(out, f"R{level}", 2)


def build_tot(params: ScaleParams) -> Structure:
    return _quadruple(params, params.n)[0]


def build_gap(params: ScaleParams) -> Structure:
    return _quadruple(params, params.n)[1]


def build_sat(params: ScaleParams) -> Structure:
    """The big instance that satisfies the level-n query."""
    return _quadruple(params, params.n)[2]


def build_unsat(params: ScaleParams) -> Structure:
    """The big instance that does not satisfy the level-n query."""
    return _quadruple(params, params.n)[3]


STRUCTURE_FAMILIES = ("L", "G", "Tot", "Gap", "M", "N")


def build_family(family: str, params: ScaleParams | None = None, m: int | None = None) -> Structure:
    """Build a structure family member by name (CLI surface)."""
    if family == "L":
        if m is None:
            raise ConstructionError("family L needs m")
        return build_L(m)
    if family == "G":
        if m is None:
            raise ConstructionError("family G needs m")
        return build_G(m)
    if params is None:
        raise ConstructionError(f"family {family} needs n and k")
    builders = {"Tot": build_tot, "Gap": build_gap, "M": build_sat, "N": build_unsat}
    if family not in builders:
        raise ConstructionError(f"unknown family {family!r}; expected one of {STRUCTURE_FAMILIES}")
    return builders[family](params)


# -- sentence family -----------------------------------------------------------

SENTENCE_NAMES = (
    "NLO",
    "PartialSucc",
    "Total",
    "SomeTotalR",
    "Succ",
    "PartialSuccN",
    "TotalN",
    "SomeTotalRN",
    "FullQuery",
    "PhiN",
)

_x, _y, _z, _w = Var("x"), Var("y"), Var("z"), Var("w")


@lru_cache(maxsize=None)
def nlo_sentence() -> Formula:
    """The order relation is *not* a linear order: some violation of
    reflexivity, antisymmetry, transitivity or totality exists."""
    x, y, z = _x, _y, _z
    return disj(
        Exists("x", Not(leq(x, x))),
        fo.exists(("x", "y"), conj(leq(x, y), leq(y, x), Not(Eq(x, y)))),
        fo.exists(("x", "y", "z"), conj(leq(x, y), leq(y, z), Not(leq(x, z)))),
        fo.exists(("x", "y"), conj(Not(leq(x, y)), Not(leq(y, x)))),
    )


def _is_successor(x: Var, y: Var, mid: str) -> Formula:
    return conj(lt(x, y), Not(Exists(mid, conj(lt(x, Var(mid)), lt(Var(mid), y)))))


@lru_cache(maxsize=None)
def partial_succ_sentence() -> Formula:
    """Every S-pair steps to the immediate order successor."""
    return fo.forall(("x", "y"), Implies(Atom("S", (_x, _y)), _is_successor(_x, _y, "z")))


@lru_cache(maxsize=None)
def total_formula(x: str = "x", y: str = "y") -> Formula:
    """S is total on the interval [x, y]: every element strictly inside has
    an S-step that stays in the interval."""
    vx, vy, vz, vw = Var(x), Var(y), Var(z := "z"), Var(w := "w")
    step = Exists(w, conj(lt(vz, vw), leq(vw, vy), Atom("S", (vz, vw))))
    return conj(lt(vx, vy), Forall(z, Implies(conj(leq(vx, vz), lt(vz, vy)), step)))


@lru_cache(maxsize=None)
def succ_formula(n: int, x: str, y: str) -> Formula:
    """Level-n successor: P_n endpoints joined by S_n whose interval
    satisfies the level-(n-1) query."""
    if n < 2:
        raise ConstructionError("Succ is defined for levels >= 2")
    vx, vy = Var(x), Var(y)
    return conj(
        Atom(f"P{n}", (vx,)),
        Atom(f"P{n}", (vy,)),
        Atom(f"S{n}", (vx, vy)),
        fo.relativize(some_total_r(n - 1), x, y),
    )


@lru_cache(maxsize=None)
def partial_succ_n(n: int) -> Formula:
    """Level-n successor pairs have no P_n element strictly between."""
    inner = Forall("z", Implies(Atom(f"P{n}", (_z,)), disj(leq(_z, _x), leq(_y, _z))))
    return fo.forall(("x", "y"), Implies(succ_formula(n, "x", "y"), inner))


@lru_cache(maxsize=None)
def total_n(n: int, x: str = "x", y: str = "y") -> Formula:
    """The level-n successor chain is total on the interval [x, y]."""
    if n < 2:
        raise ConstructionError("TotalN is defined for levels >= 2")
    vx, vy, vz, vw = Var(x), Var(y), Var("z"), Var("w")
    step = Exists("w", conj(lt(vz, vw), leq(vw, vy), succ_formula(n, "z", "w")))
    guard = conj(Atom(f"P{n}", (vz,)), leq(vx, vz), lt(vz, vy))
    return conj(lt(vx, vy), Forall("z", Implies(guard, step)))


@lru_cache(maxsize=None)
def some_total_r(n: int) -> Formula:
    """The level-n query: either the level-n successor discipline fails, or
    some R_n-linked interval carries a total level-n chain."""
    if n == 1:
        body = conj(Atom("R", (_x, _y)), total_formula("x", "y"))
        return disj(Not(partial_succ_sentence()), fo.exists(("x", "y"), body))
    body = conj(Atom(f"R{n}", (_x, _y)), total_n(n, "x", "y"))
    return disj(Not(partial_succ_n(n)), fo.exists(("x", "y"), body))


@lru_cache(maxsize=None)
def full_query(n: int) -> Formula:
    return disj(nlo_sentence(), some_total_r(n))


@lru_cache(maxsize=None)
def phi_n(n: int) -> Formula:
    """The level-n query with its two outer existentials replaced by fresh
    constants a and b (a universal-leaning variant over sigma(n) + {a, b})."""
    ca, cb = Const("a"), Const("b")
    if n == 1:
        matrix = conj(Atom("R", (ca, cb)), fo.subst_consts(total_formula("x", "y"), {"x": ca, "y": cb}))
        return disj(Not(partial_succ_sentence()), matrix)
    matrix = conj(
        Atom(f"R{n}", (ca, cb)),
        fo.subst_consts(total_n(n, "x", "y"), {"x": ca, "y": cb}),
    )
    return disj(Not(partial_succ_n(n)), matrix)


def build_sentence(name: str, n: int = 1) -> Formula:
    """Build a sentence or formula of the family by name."""
    if name == "NLO":
        return nlo_sentence()
    if name == "PartialSucc":
        return partial_succ_sentence()
    if name == "Total":
        return total_formula()
    if name == "SomeTotalR":
        return some_total_r(1)
    if name == "Succ":
        return succ_formula(n, "x", "y")
    if name == "PartialSuccN":
        return partial_succ_n(n)
    if name == "TotalN":
        return total_n(n)
    if name == "SomeTotalRN":
        return some_total_r(n)
    if name == "FullQuery":
        return full_query(n)
    if name == "PhiN":
        return phi_n(n)
    raise ConstructionError(f"unknown sentence {name!r}; expected one of {SENTENCE_NAMES}")


def sentence_vocabulary(name: str, n: int = 1) -> Vocabulary:
    vocab = sigma(max(n, 1))
    if name == "PhiN":
        vocab = vocab.with_constants("a", "b")
    return vocab


# -- Datalog family --------------------------------------------------------------


def build_datalog(n: int) -> DatalogProgram:
    """The level-n Datalog(not) program deciding the full query.

    Intensional: transitive closures Total / Total_j, interval closures
    RTotal_j, level successors Succ_j, the 0-ary guards NLO and
    NotPartialSucc (with NotPartialSucc_j defined but not wired to the
    goal), and the goal G.
    """
    if n < 1:
        raise ConstructionError("level must be >= 1")
    x, y, z, u, v = "x", "y", "z", "u", "v"
    rules: list[Rule] = []

    def lit(pred: str, *args, neg: bool = False) -> Literal:
        return Literal(pred, tuple(args), neg)

    # order-discipline guards; each body is one violation pattern
    rules += [
        Rule("NLO", (), (lit("Dom", x), lit(ORDER, x, x, neg=True))),
        Rule("NLO", (), (lit(ORDER, x, y), lit(ORDER, y, x), lit("=", x, y, neg=True))),
        Rule("NLO", (), (lit(ORDER, x, y), lit(ORDER, y, z), lit(ORDER, x, z, neg=True))),
        Rule("NLO", (), (lit("Dom", x), lit("Dom", y), lit(ORDER, x, y, neg=True), lit(ORDER, y, x, neg=True))),
        Rule("NotPartialSucc", (), (lit("S", x, y), lit(ORDER, x, z), lit(ORDER, z, y), lit("=", z, x, neg=True), lit("=", z, y, neg=True))),
        Rule("NotPartialSucc", (), (lit("S", x, y), lit(ORDER, x, y, neg=True))),
        Rule("NotPartialSucc", (), (lit("S", x, y), lit("=", x, y))),
        Rule("G", (), (lit("NLO"),)),
        Rule("G", (), (lit("NotPartialSucc"),)),
    ]
    rules += [
        Rule("Total", (x, y), (lit("S", x, y),)),
        Rule("Total", (x, y), (lit("S", x, z), lit("Total", z, y))),
        Rule("RTotal1", (x, y), (lit(ORDER, x, u), lit(ORDER, v, y), lit("R", u, v), lit("Total", u, v))),
    ]
    for j in range(2, n + 1):
        prev = f"RTotal{j - 1}"
        rules += [
            Rule(f"Succ{j}", (x, y), (lit(f"P{j}", x), lit(f"P{j}", y), lit(f"S{j}", x, y), lit(prev, x, y))),
            Rule(
                f"NotPartialSucc{j}",
                (),
                (lit(f"Succ{j}", x, y), lit(f"P{j}", z), lit(ORDER, x, z), lit(ORDER, z, y), lit("=", x, z, neg=True), lit("=", y, z, neg=True)),
            ),
            Rule(f"Total{j}", (x, y), (lit(f"Succ{j}", x, y),)),
            Rule(f"Total{j}", (x, y), (lit(f"Succ{j}", x, z), lit(f"Total{j}", z, y))),
            Rule(f"RTotal{j}", (x, y), (lit(ORDER, x, u), lit(ORDER, v, y), lit(f"R{j}", u, v), lit(f"Total{j}", u, v))),
        ]
    top = "RTotal1" if n == 1 else f"RTotal{n}"
    rules.append(Rule("G", (), (lit(top, x, y),)))

    intensional: list[tuple[str, int]] = [("NLO", 0), ("NotPartialSucc", 0), ("Total", 2), ("RTotal1", 2)]
    for j in range(2, n + 1):
        intensional += [(f"Succ{j}", 2), (f"NotPartialSucc{j}", 0), (f"Total{j}", 2), (f"RTotal{j}", 2)]
    intensional.append(("G", 0))
    return DatalogProgram(sigma(n), tuple(intensional), "G", tuple(rules))
