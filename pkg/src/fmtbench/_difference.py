"""Difference-logic satisfiability over a linear order.

Shared by the FO evaluator and the Datalog planner: when the order relation
of a structure is a genuine linear order, a conjunction of order constraints
that is unsatisfiable over the integers cannot have a witness, so whole
quantifier blocks / rules can be discarded without enumeration.
"""

from __future__ import annotations

from typing import Hashable, Iterable

# A constraint is (kind, a, b) with kind in {"le", "lt", "eq", "ne"}, read as
# a <= b, a < b, a = b, a != b.  Terms are arbitrary hashable keys; integer
# terms are interpreted as concrete order positions.
Constraint = tuple[str, Hashable, Hashable]

_INF = float("inf")


def order_unsat(constraints: Iterable[Constraint]) -> bool:
    """True if no assignment into a linear order satisfies all constraints.

    Sound but not complete in general; complete for the conjunctions built
    from <=-atoms, equalities and disequalities that the callers produce.
    """
    le_lt: list[tuple[Hashable, Hashable, int]] = []  # a - b <= w encoded below
    ne: list[tuple[Hashable, Hashable]] = []
    nodes: set[Hashable] = set()
    for kind, a, b in constraints:
        nodes.add(a)
        nodes.add(b)
        if kind == "le":
            le_lt.append((a, b, 0))
        elif kind == "lt":
            le_lt.append((a, b, -1))
        elif kind == "eq":
            le_lt.append((a, b, 0))
            le_lt.append((b, a, 0))
        elif kind == "ne":
            ne.append((a, b))
        else:
            raise ValueError(f"unknown constraint kind: {kind!r}")
    if not nodes:
        return False

    # Concrete integers carry their numeric order.
    ints = sorted(n for n in nodes if isinstance(n, int))
    for x, y in zip(ints, ints[1:]):
        if x == y:
            continue
        le_lt.append((x, y, -1))

    idx = {n: i for i, n in enumerate(nodes)}
    m = len(idx)
    dist = [[0 if i == j else _INF for j in range(m)] for i in range(m)]
    for a, b, w in le_lt:
        i, j = idx[a], idx[b]
        if w < dist[i][j]:
            dist[i][j] = w
    for k in range(m):
        dk = dist[k]
        for i in range(m):
            dik = dist[i][k]
            if dik == _INF:
                continue
            di = dist[i]
            for j in range(m):
                alt = dik + dk[j]
                if alt < di[j]:
                    di[j] = alt
    for i in range(m):
        if dist[i][i] < 0:
            return True
    for a, b in ne:
        i, j = idx[a], idx[b]
        if i == j:
            return True
        if dist[i][j] == 0 and dist[j][i] == 0:
            return True  # forced equal, contradicting a != b
    return False
