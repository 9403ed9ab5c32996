"""MPS and LP text writers and readers for :class:`LinearModel`.

Formats:

``"mps"``
    Fixed-field MPS. Names are truncated to 8 characters; truncation that
    makes two names collide raises :class:`ExportError`. Numeric fields are
    written at full ``repr`` precision and may overflow their 12-column
    slot (whitespace-delimited readers, including :func:`parse`, accept it).
``"free-mps"``
    Free MPS, names kept verbatim.
``"lp"``
    CPLEX-style LP text.

Objective constants are written as the negated RHS of the objective row in
MPS and as a bare number in LP.
"""

from __future__ import annotations

import math
import re
from collections import Counter

from .model import BINARY, CONTINUOUS, Constraint, LinearModel, Variable

FORMATS = ("mps", "free-mps", "lp")
# LP lines holding only one of these words start a section
LP_KEYWORDS = frozenset(
    "minimize minimise min maximize maximise max st bounds binaries binary bin end "
    "generals general gen free inf infinity".split()
)
OBJ_ROW = "OBJ"


class ExportError(ValueError):
    pass


class ParseError(ValueError):
    pass


def _num(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _float(tok: str) -> float:
    try:
        return float(tok)
    except ValueError as exc:
        raise ParseError(f"bad number {tok!r}") from exc


def _short_names(names: list[str], width: int, what: str) -> list[str]:
    short = [n[:width] for n in names]
    dup = {s for s, k in Counter(short).items() if k > 1}
    if dup:
        colliding = sorted(n for n in names if n[:width] in dup)
        raise ExportError(f"{what} names collide after truncation to {width} chars: {colliding}")
    return short


# ---------------------------------------------------------------------------
# MPS


def _row_type(sense: str) -> str:
    return {"<=": "L", ">=": "G", "=": "E"}[sense]


def _fixed(f1="", f2="", f3="", f4="", f5="", f6="") -> str:
    line = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        line += f"   {f5:<8}  {f6:>12}"
    return line.rstrip()


def _free(*fields) -> str:
    return " " + " ".join(f for f in fields if f != "")


def write_mps(model: LinearModel, fixed: bool = True) -> str:
    vnames = [v.name for v in model.variables]
    rnames = [c.name for c in model.constraints]
    if any(" " in n for n in vnames + rnames):
        raise ExportError("names must not contain spaces")
    if fixed:
        vnames = _short_names(vnames, 8, "variable")
        rnames = _short_names(rnames, 8, "constraint")
    if OBJ_ROW in rnames:
        raise ExportError(f"constraint name {OBJ_ROW!r} is reserved")
    line = _fixed if fixed else _free

    columns: list[list[tuple[str, float]]] = [[] for _ in model.variables]
    for j, a in model.objective:
        columns[j].append((OBJ_ROW, a))
    for r, c in enumerate(model.constraints):
        for j, a in c.terms:
            columns[j].append((rnames[r], a))

    out = [f"NAME          {model.name}" if fixed else f"NAME {model.name}", "ROWS", line("N", OBJ_ROW)]
    out += [line(_row_type(c.sense), rnames[r]) for r, c in enumerate(model.constraints)]
    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, v in enumerate(model.variables):
        is_int = v.kind == BINARY
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(line("", f"M{marker}", "'MARKER'", tag))
            marker += 1
            in_int = is_int
        entries = columns[j] or [(OBJ_ROW, 0.0)]
        for row, a in entries:
            out.append(line("", vnames[j], row, _num(a)))
    if in_int:
        out.append(line("", f"M{marker}", "'MARKER'", "'INTEND'"))
    out.append("RHS")
    if model.objective_constant:
        out.append(line("", "RHS", OBJ_ROW, _num(-model.objective_constant)))
    for r, c in enumerate(model.constraints):
        if c.rhs:
            out.append(line("", "RHS", rnames[r], _num(c.rhs)))
    out.append("BOUNDS")
    for j, v in enumerate(model.variables):
        name = vnames[j]
        if v.kind == BINARY:
            out.append(line("BV", "BND", name))
            continue
        if v.lower == v.upper:
            out.append(line("FX", "BND", name, _num(v.lower)))
            continue
        if v.lower == -math.inf and v.upper == math.inf:
            out.append(line("FR", "BND", name))
            continue
        if v.lower == -math.inf:
            out.append(line("MI", "BND", name))
        elif v.lower != 0:
            out.append(line("LO", "BND", name, _num(v.lower)))
        if v.upper != math.inf:
            out.append(line("UP", "BND", name, _num(v.upper)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def parse_mps(text: str) -> LinearModel:
    name = "model"
    section = None
    obj_row = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    terms: dict[str, list[tuple[int, float]]] = {}
    rhs: dict[str, float] = {}
    var_index: dict[str, int] = {}
    kinds: list[str] = []
    lower: list[float] = []
    upper: list[float] = []
    obj_terms: list[tuple[int, float]] = []
    obj_const = 0.0
    in_int = False

    def var(vname: str) -> int:
        if vname not in var_index:
            var_index[vname] = len(kinds)
            kinds.append(BINARY if in_int else CONTINUOUS)
            lower.append(0.0)
            upper.append(1.0 if in_int else math.inf)
        return var_index[vname]

    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0].upper()
            if section == "NAME":
                name = head[1] if len(head) > 1 else name
            elif section not in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"):
                raise ParseError(f"unknown section {section}")
            if section == "RANGES":
                raise ParseError("RANGES are not supported")
            continue
        tok = raw.split()
        if section == "ROWS":
            typ, rname = tok[0].upper(), tok[1]
            if typ == "N":
                if obj_row is None:
                    obj_row = rname
                continue
            row_sense[rname] = {"L": "<=", "G": ">=", "E": "="}[typ]
            row_order.append(rname)
            terms[rname] = []
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            j = var(tok[0])
            for rname, val in zip(tok[1::2], tok[2::2]):
                a = _float(val)
                if rname == obj_row:
                    if a:
                        obj_terms.append((j, a))
                elif rname in terms:
                    if a:
                        terms[rname].append((j, a))
                else:
                    raise ParseError(f"column {tok[0]} references unknown row {rname}")
        elif section == "RHS":
            body = tok[1:] if len(tok) % 2 == 1 else tok
            for rname, val in zip(body[0::2], body[1::2]):
                if rname == obj_row:
                    obj_const = -_float(val)
                else:
                    rhs[rname] = _float(val)
        elif section == "BOUNDS":
            typ = tok[0].upper()
            j = var_index.get(tok[2])
            if j is None:
                raise ParseError(f"bound on unknown column {tok[2]}")
            val = _float(tok[3]) if len(tok) > 3 else None
            if typ == "BV":
                kinds[j], lower[j], upper[j] = BINARY, 0.0, 1.0
            elif typ == "UP":
                upper[j] = val
                if kinds[j] == BINARY:
                    kinds[j] = CONTINUOUS if val != 1 else BINARY
            elif typ == "LO":
                lower[j] = val
            elif typ == "FX":
                lower[j] = upper[j] = val
                kinds[j] = CONTINUOUS
            elif typ == "MI":
                lower[j] = -math.inf
            elif typ == "PL":
                upper[j] = math.inf
            elif typ == "FR":
                lower[j], upper[j] = -math.inf, math.inf
            else:
                raise ParseError(f"unsupported bound type {typ}")
        elif section == "ENDATA":
            break
    if obj_row is None:
        raise ParseError("no objective row")
    names = sorted(var_index, key=var_index.get)
    variables = tuple(Variable(n, kinds[j], lower[j], upper[j]) for j, n in enumerate(names))
    constraints = tuple(Constraint(r, tuple(terms[r]), row_sense[r], rhs.get(r, 0.0)) for r in row_order)
    return LinearModel(variables, constraints, tuple(obj_terms), obj_const, name)


# ---------------------------------------------------------------------------
# LP


def _lp_expr(terms, names) -> str:
    parts = []
    for j, a in terms:
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        coef = "" if mag == 1 else _num(mag) + " "
        parts.append(f"{sign} {coef}{names[j]}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(prefix: str, body: str, width: int = 200) -> list[str]:
    lines, cur = [], prefix
    for tok in body.split(" "):
        if len(cur) + len(tok) + 1 > width and cur.strip():
            lines.append(cur.rstrip())
            cur = "   "
        cur += tok + " "
    lines.append(cur.rstrip())
    return lines


def write_lp(model: LinearModel) -> str:
    names = [v.name for v in model.variables]
    bad = [n for n in names + [c.name for c in model.constraints] if not re.fullmatch(r"[A-Za-z_][\w.\[\]]*", n)]
    bad += [n for n in names if n.lower() in LP_KEYWORDS]
    if bad:
        raise ExportError(f"names not representable in LP format: {bad[:10]}")
    out = [f"\\ {model.name}", "Minimize"]
    obj = _lp_expr(model.objective, names)
    if model.objective_constant:
        c = model.objective_constant
        const = ("+ " if c > 0 else "- ") + _num(abs(c))
        obj = _num(c) if obj == "0" else f"{obj} {const}"
    out += _wrap(" obj: ", obj)
    out.append("Subject To")
    for c in model.constraints:
        out += _wrap(f" {c.name}: ", f"{_lp_expr(c.terms, names)} {c.sense} {_num(c.rhs)}")
    out.append("Bounds")
    for v in model.variables:
        if v.kind == BINARY:
            out.append(f" 0 <= {v.name} <= 1")
        elif v.lower == -math.inf and v.upper == math.inf:
            out.append(f" {v.name} free")
        else:
            out.append(f" {_num(v.lower)} <= {v.name} <= {_num(v.upper)}")
    binaries = [v.name for v in model.variables if v.kind == BINARY]
    if binaries:
        out.append("Binaries")
        out += [f" {n}" for n in binaries]
    out.append("End")
    return "\n".join(out) + "\n"


_TOKEN = re.compile(r"\s*([<>=]=?|[+-]|[A-Za-z_][\w.\[\]]*|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf(?:inity)?)", re.I)


def _tokens(s: str) -> list[str]:
    out, pos = [], 0
    s = s.rstrip()
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m:
            raise ParseError(f"cannot tokenize {s[pos:pos + 20]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def _is_num(tok: str) -> bool:
    return bool(re.fullmatch(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|inf(?:inity)?", tok, re.I))


def _parse_expr(toks: list[str], var) -> tuple[list[tuple[int, float]], float]:
    terms: dict[int, float] = {}
    order: list[int] = []
    const = 0.0
    k = 0
    while k < len(toks):
        sign = 1.0
        while k < len(toks) and toks[k] in "+-":
            sign = -sign if toks[k] == "-" else sign
            k += 1
        coef = 1.0
        if k < len(toks) and _is_num(toks[k]):
            coef = _float(toks[k])
            k += 1
            if k >= len(toks) or toks[k] in "+-":
                const += sign * coef
                continue
        j = var(toks[k])
        k += 1
        if j not in terms:
            order.append(j)
            terms[j] = 0.0
        terms[j] += sign * coef
    return [(j, terms[j]) for j in order if terms[j] != 0], const


def parse_lp(text: str) -> LinearModel:
    name = "model"
    sections: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "bin": []}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("\\"):
            if current is None and len(line) > 1:
                name = line[1:].strip() or name
            continue
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "minimise", "min"):
            current = "obj"
        elif low in ("subject to", "st", "s.t.", "such that"):
            current = "st"
        elif low == "bounds":
            current = "bounds"
        elif low in ("binaries", "binary", "bin"):
            current = "bin"
        elif low == "end":
            break
        elif low in ("maximize", "maximise", "max"):
            raise ParseError("only minimization models are supported")
        elif low in ("generals", "general", "gen"):
            raise ParseError("general integers are not supported")
        elif current is None:
            raise ParseError(f"content before objective section: {line!r}")
        elif raw[:1].isspace() and current in ("obj", "st") and sections[current] and ":" not in line:
            sections[current][-1] += " " + line
        else:
            sections[current].append(line)

    var_index: dict[str, int] = {}
    bound_order: list[str] = []

    def var(vname: str) -> int:
        if vname not in var_index:
            var_index[vname] = len(var_index)
        return var_index[vname]

    lows: dict[str, float] = {}
    ups: dict[str, float] = {}
    for line in sections["bounds"]:
        toks = _merge_signs(_tokens(line))
        if len(toks) == 2 and toks[1].lower() == "free":
            v = toks[0]
            lows[v], ups[v] = -math.inf, math.inf
        elif len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
            v = toks[2]
            lows[v], ups[v] = _signed(toks[0]), _signed(toks[4])
        elif len(toks) == 3 and toks[1] in ("<=", ">=", "="):
            v, val = toks[0], _signed(toks[2])
            if toks[1] == "<=":
                ups[v] = val
            elif toks[1] == ">=":
                lows[v] = val
            else:
                lows[v] = ups[v] = val
        else:
            raise ParseError(f"unsupported bound line {line!r}")
        bound_order.append(v)
    # declaration order follows the Bounds section when it lists variables
    for v in bound_order:
        var(v)

    obj_text = " ".join(sections["obj"])
    obj_text = obj_text.split(":", 1)[1] if ":" in obj_text else obj_text
    obj_terms, obj_const = _parse_expr(_tokens(obj_text), var)

    constraints = []
    for k, line in enumerate(sections["st"]):
        cname, body = line.split(":", 1) if ":" in line else (f"c{k}", line)
        toks = _tokens(body)
        ops = [p for p, tk in enumerate(toks) if tk in ("<=", ">=", "=", "<", ">", "=<", "=>")]
        if len(ops) != 1:
            raise ParseError(f"constraint {cname.strip()}: expected one relation")
        p = ops[0]
        sense = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(toks[p], toks[p])
        terms, const = _parse_expr(toks[:p], var)
        rhs_terms, rhs_const = _parse_expr(toks[p + 1 :], var)
        if rhs_terms:
            raise ParseError(f"constraint {cname.strip()}: variables on right-hand side")
        constraints.append(Constraint(cname.strip(), tuple(terms), sense, rhs_const - const))

    binaries = {tok for line in sections["bin"] for tok in line.split()}
    for v in binaries:
        var(v)
    names = sorted(var_index, key=var_index.get)
    variables = []
    for v in names:
        if v in binaries:
            variables.append(Variable(v, BINARY, 0.0, 1.0))
        else:
            variables.append(Variable(v, CONTINUOUS, lows.get(v, 0.0), ups.get(v, math.inf)))
    return LinearModel(tuple(variables), tuple(constraints), tuple(obj_terms), obj_const, name)


def _signed(tok: str) -> float:
    return _float(tok)


def _merge_signs(toks: list[str]) -> list[str]:
    out: list[str] = []
    for tok in toks:
        if out and out[-1] in "+-" and _is_num(tok) and (len(out) == 1 or out[-2] in ("<=", ">=", "=")):
            out[-1] = out[-1] + tok
        else:
            out.append(tok)
    return out


# ---------------------------------------------------------------------------


def export(model: LinearModel, fmt: str = "mps") -> str:
    """Serialize ``model`` as ``"mps"`` (fixed), ``"free-mps"`` or ``"lp"``."""
    problems = model.check()
    if problems:
        raise ExportError("model is not well formed: " + "; ".join(problems))
    if fmt == "mps":
        return write_mps(model, fixed=True)
    if fmt == "free-mps":
        return write_mps(model, fixed=False)
    if fmt == "lp":
        return write_lp(model)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def parse(text: str, fmt: str = "mps") -> LinearModel:
    if fmt in ("mps", "free-mps"):
        return parse_mps(text)
    if fmt == "lp":
        return parse_lp(text)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def canonical(model: LinearModel) -> tuple:
    """Order-insensitive comparable form of a model (terms sorted by name,
    zero coefficients dropped)."""
    names = [v.name for v in model.variables]

    def norm(terms):
        acc: dict[str, float] = {}
        for j, a in terms:
            acc[names[j]] = acc.get(names[j], 0.0) + a
        return tuple(sorted((n, a) for n, a in acc.items() if a != 0))

    return (
        tuple(model.variables),
        tuple((c.name, norm(c.terms), c.sense, c.rhs) for c in model.constraints),
        norm(model.objective),
        model.objective_constant,
    )


def equivalent(a: LinearModel, b: LinearModel) -> bool:
    return canonical(a) == canonical(b)
