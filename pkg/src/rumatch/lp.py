"""Linear programs of the assignment game as CPLEX-LP text.

Three documents are produced: the dual assignment LP of one market, the
collapsed bilevel LP whose optimum is the upper (``max``) or lower (``min``)
lattice bound, and a block-diagonal LP that inverts several markets at once.
Nothing here solves an LP; the files are meant for an external solver.  The
exact byte layout is described in ``docs/lp-format.md``.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PreconditionError, UnsupportedOperationError
from .market import DiscreteMarket

LINE_WIDTH = 78
SENSES = (">=", "<=", "=")


def fmt_number(x):
    """Shortest round-tripping decimal for a float (``repr``)."""
    x = float(x)
    if not np.isfinite(x):
        raise PreconditionError(f"cannot write non-finite coefficient {x!r}")
    return repr(x)


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple
    sense: str
    rhs: float


@dataclass
class LpDocument:
    """A linear program with named variables.

    Attributes
    ----------
    sense : {"min", "max"}
    objective : list of (coef, var)
    rows : list of Row
    variables : list of str
        Declaration order; every variable appears in the Bounds section.
    bounds : dict
        ``var -> (lo, hi)`` with ``None`` for an infinite side.
    """

    sense: str
    objective: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    variables: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)
    comment: str = ""

    def declare(self, name, lo=0.0, hi=None):
        if name in self.bounds:
            raise PreconditionError(f"variable {name!r} declared twice")
        self.variables.append(name)
        self.bounds[name] = (lo, hi)

    def add_row(self, name, terms, sense, rhs):
        if sense not in SENSES:
            raise PreconditionError(f"unknown row sense {sense!r}")
        self.rows.append(Row(name, tuple((float(c), v) for c, v in terms), sense, float(rhs)))

    def validate(self):
        names = [r.name for r in self.rows]
        if len(set(names)) != len(names):
            raise PreconditionError("row names must be unique")
        declared = set(self.variables)
        for coef, var in self.objective:
            if var not in declared:
                raise PreconditionError(f"objective uses undeclared variable {var!r}")
        for row in self.rows:
            for coef, var in row.terms:
                if var not in declared:
                    raise PreconditionError(f"row {row.name!r} uses undeclared variable {var!r}")
        return self

    def rows_with_prefix(self, prefix):
        return [r for r in self.rows if r.name.startswith(prefix)]

    @property
    def free_variables(self):
        return [v for v in self.variables if self.bounds[v] == (None, None)]

    def to_text(self):
        return write_lp(self)

    def to_arrays(self):
        """Dense ``(c, A_ub, b_ub, A_eq, b_eq, bounds, variables)`` in minimisation form.

        ``>=`` rows are negated into ``<=`` rows and a ``max`` objective is
        negated, so the result can be handed to any ``min c.x`` solver.
        Intended for small instances only.
        """
        index = {v: k for k, v in enumerate(self.variables)}
        n = len(self.variables)
        c = np.zeros(n)
        for coef, var in self.objective:
            c[index[var]] += coef
        if self.sense == "max":
            c = -c
        ub, b_ub, eq, b_eq = [], [], [], []
        for row in self.rows:
            a = np.zeros(n)
            for coef, var in row.terms:
                a[index[var]] += coef
            if row.sense == "=":
                eq.append(a)
                b_eq.append(row.rhs)
            elif row.sense == "<=":
                ub.append(a)
                b_ub.append(row.rhs)
            else:
                ub.append(-a)
                b_ub.append(-row.rhs)
        bounds = [self.bounds[v] for v in self.variables]
        return (c, np.array(ub).reshape(-1, n), np.array(b_ub), np.array(eq).reshape(-1, n),
                np.array(b_eq), bounds, list(self.variables))


def _terms_text(terms):
    parts = []
    for k, (coef, var) in enumerate(terms):
        sign = "-" if coef < 0 or (coef == 0 and np.signbit(coef)) else "+"
        parts.append(f"{sign} {fmt_number(abs(coef))} {var}")
    return parts


def _wrap(head, parts, tail=""):
    """Join ``parts`` after ``head``; continuation lines start with a space."""
    lines, line = [], head
    for part in parts + ([tail] if tail else []):
        if len(line) + 1 + len(part) > LINE_WIDTH and line.strip():
            lines.append(line)
            line = "  " + part
        else:
            line = f"{line} {part}" if line else part
    lines.append(line)
    return lines


def _bound_text(var, lo, hi):
    if lo is None and hi is None:
        return f" {var} free"
    if hi is None:
        return f" {var} >= {fmt_number(lo)}"
    if lo is None:
        return f" -inf <= {var} <= {fmt_number(hi)}"
    if lo == hi:
        return f" {var} = {fmt_number(lo)}"
    return f" {fmt_number(lo)} <= {var} <= {fmt_number(hi)}"


def write_lp(doc):
    """Serialise ``doc``; identical documents give identical bytes."""
    doc.validate()
    out = []
    for line in doc.comment.splitlines():
        out.append(f"\\ {line}".rstrip())
    out.append("Maximize" if doc.sense == "max" else "Minimize")
    out.extend(_wrap(" obj:", _terms_text(doc.objective)))
    out.append("Subject To")
    for row in doc.rows:
        out.extend(_wrap(f" {row.name}:", _terms_text(row.terms), f"{row.sense} {fmt_number(row.rhs)}"))
    out.append("Bounds")
    for var in doc.variables:
        out.append(_bound_text(var, *doc.bounds[var]))
    out.append("End")
    return "\n".join(out) + "\n"


_TERM = re.compile(r"([+-])\s+(\S+)\s+([A-Za-z_][\w.]*)")


def _parse_terms(text):
    text = text.strip()
    terms = []
    pos = 0
    for match in _TERM.finditer(text):
        if text[pos:match.start()].strip():
            raise PreconditionError(f"cannot parse terms near {text[pos:match.start()]!r}")
        sign, num, var = match.groups()
        coef = float(num)
        terms.append((-coef if sign == "-" else coef, var))
        pos = match.end()
    if text[pos:].strip():
        raise PreconditionError(f"cannot parse terms near {text[pos:]!r}")
    return terms


def _parse_bound(line):
    tok = line.split()
    if len(tok) == 2 and tok[1] == "free":
        return tok[0], (None, None)
    if len(tok) == 3 and tok[1] == ">=":
        return tok[0], (float(tok[2]), None)
    if len(tok) == 3 and tok[1] == "=":
        v = float(tok[2])
        return tok[0], (v, v)
    if len(tok) == 5 and tok[1] == tok[3] == "<=":
        lo = None if tok[0] == "-inf" else float(tok[0])
        return tok[2], (lo, float(tok[4]))
    raise PreconditionError(f"cannot parse bound {line!r}")


def parse_lp(text):
    """Read a document written by :func:`write_lp` (the documented subset only)."""
    comment, section = [], None
    statements = {"obj": [], "rows": [], "bounds": []}
    for raw in text.splitlines():
        if raw.startswith("\\"):
            comment.append(raw[2:] if raw.startswith("\\ ") else raw[1:])
            continue
        if raw in ("Minimize", "Maximize"):
            sense, section = ("min" if raw == "Minimize" else "max"), "obj"
            continue
        if raw == "Subject To":
            section = "rows"
            continue
        if raw == "Bounds":
            section = "bounds"
            continue
        if raw == "End":
            section = "end"
            continue
        if section not in statements:
            raise PreconditionError(f"unexpected line {raw!r}")
        if raw.startswith("  ") and statements[section]:
            statements[section][-1] += " " + raw.strip()
        else:
            statements[section].append(raw.strip())
    if section != "end":
        raise PreconditionError("LP text is missing its End line")
    doc = LpDocument(sense=sense, comment="\n".join(comment))
    for stmt in statements["bounds"]:
        var, (lo, hi) = _parse_bound(stmt)
        doc.declare(var, lo, hi)
    (obj,) = statements["obj"]
    if not obj.startswith("obj:"):
        raise PreconditionError("objective must be named 'obj'")
    doc.objective = _parse_terms(obj[4:])
    for stmt in statements["rows"]:
        name, body = stmt.split(":", 1)
        match = re.search(r"\s(>=|<=|=)\s+(\S+)$", body)
        if match is None:
            raise PreconditionError(f"row {name!r} has no sense and right-hand side")
        doc.add_row(name, _parse_terms(body[:match.start()]), match.group(1), float(match.group(2)))
    return doc.validate()


def read_lp(path):
    with open(path) as fh:
        return parse_lp(fh.read())


def save_lp(doc, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(write_lp(doc))


def _market_inputs(market, shocks):
    if not isinstance(market, DiscreteMarket):
        raise PreconditionError("expected a DiscreteMarket")
    if shocks is None:
        if not market.model.additive:
            raise UnsupportedOperationError(
                f"{market.model.name!r} model is not additive; pass an explicit shock matrix")
        shocks = market.model.shocks(market.draws)
    shocks = np.asarray(shocks, dtype=float)
    if shocks.shape != (market.size, market.model.num_alternatives):
        raise PreconditionError("shock matrix must be N x J0")
    return shocks, market.counts / market.size


def _dual_block(doc, shocks, shares, prefix=""):
    n, n_alt = shocks.shape
    u = [f"{prefix}u_{i}" for i in range(n)]
    d = [f"{prefix}d_{j}" for j in range(n_alt)]
    for name in u:
        doc.declare(name, None, None)
    doc.declare(d[0], 0.0, None)
    for name in d[1:]:
        doc.declare(name, None, None)
    doc.objective.extend((1.0 / n, name) for name in u)
    doc.objective.extend((-shares[j], d[j]) for j in range(n_alt))
    for i in range(n):
        for j in range(n_alt):
            doc.add_row(f"{prefix}feas_{i}_{j}", [(1.0, u[i]), (-1.0, d[j])], ">=", shocks[i, j])
    doc.add_row(f"{prefix}norm", [(1.0, d[0])], "=", 0.0)
    return u, d


def export_dual_lp(market, shocks=None):
    """Dual assignment LP: ``min sum u_i / N - sum s_j d_j`` s.t. ``u_i - d_j >= eps_ij``.

    ``s_j`` is the discretised share ``m_j / N``.  ``d_0`` is pinned by the
    row ``norm: d_0 = 0``; all other variables are free.
    """
    shocks, shares = _market_inputs(market, shocks)
    doc = LpDocument(sense="min", comment="dual assignment LP")
    _dual_block(doc, shocks, shares)
    return doc.validate()


def export_bounds_lp(market, shocks=None, direction="max"):
    """LP whose optimum is the upper (``max``) or lower (``min``) lattice bound.

    Rows: brand marginals ``sum_i pi_i_j = m_j / N``, consumer marginals
    ``sum_j pi_i_j = 1 / N``, dual feasibility ``u_i - d_j >= eps_ij``, one
    equality forcing primal and dual objectives to agree, and ``d_0 = 0``.
    ``pi >= 0`` is expressed through the variable bounds.  The objective is
    ``sum_j d_j``.
    """
    if direction not in ("max", "min"):
        raise PreconditionError("direction must be 'max' or 'min'")
    shocks, shares = _market_inputs(market, shocks)
    n, n_alt = shocks.shape
    doc = LpDocument(sense=direction, comment=f"lattice bound LP ({direction})")
    pi = [[f"pi_{i}_{j}" for j in range(n_alt)] for i in range(n)]
    for row in pi:
        for name in row:
            doc.declare(name, 0.0, None)
    u = [f"u_{i}" for i in range(n)]
    d = [f"d_{j}" for j in range(n_alt)]
    for name in u + d:
        doc.declare(name, None, None)
    doc.objective = [(1.0, name) for name in d]
    for j in range(n_alt):
        doc.add_row(f"brand_{j}", [(1.0, pi[i][j]) for i in range(n)], "=", shares[j])
    for i in range(n):
        doc.add_row(f"consumer_{i}", [(1.0, pi[i][j]) for j in range(n_alt)], "=", 1.0 / n)
    for i in range(n):
        for j in range(n_alt):
            doc.add_row(f"feas_{i}_{j}", [(1.0, u[i]), (-1.0, d[j])], ">=", shocks[i, j])
    duality = [(shocks[i, j], pi[i][j]) for i in range(n) for j in range(n_alt)]
    duality += [(-1.0 / n, name) for name in u]
    duality += [(shares[j], d[j]) for j in range(n_alt)]
    doc.add_row("duality", duality, "=", 0.0)
    doc.add_row("norm", [(1.0, d[0])], "=", 0.0)
    return doc.validate()


def export_combined_lp(markets, shocks=None):
    """One LP inverting every market at once; block ``k`` is prefixed ``m{k}_``."""
    markets = list(markets)
    if not markets:
        raise PreconditionError("need at least one market")
    if shocks is None:
        shocks = [None] * len(markets)
    if len(shocks) != len(markets):
        raise PreconditionError("need one shock matrix per market")
    doc = LpDocument(sense="min", comment=f"combined dual assignment LP, {len(markets)} markets")
    for k, (market, eps) in enumerate(zip(markets, shocks)):
        eps, shares = _market_inputs(market, eps)
        _dual_block(doc, eps, shares, prefix=f"m{k}_")
    return doc.validate()
