"""Typed view over a liberty file, built on ``liberty-parser``.

Only the attributes the estimator needs are extracted: area, leakage, pin
capacitance, output functions, timing tables and scalar internal energy.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from liberty.parser import parse_liberty


def _s(value) -> str:
    return str(value).strip().strip('"')


@dataclass(frozen=True)
class Table:
    """A 2-D lookup table indexed by (input slew, output load)."""

    slews: tuple[float, ...]
    loads: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def lookup(self, slew: float, load: float) -> float:
        return _bilinear(self.slews, self.loads, self.values, slew, load)


def _interp_axis(axis: tuple[float, ...], x: float) -> tuple[int, int, float]:
    if len(axis) == 1:
        return 0, 0, 0.0
    i = 0
    while i < len(axis) - 2 and x > axis[i + 1]:
        i += 1
    x0, x1 = axis[i], axis[i + 1]
    t = 0.0 if x1 == x0 else (x - x0) / (x1 - x0)
    return i, i + 1, t


def _bilinear(ax1, ax2, vals, x1: float, x2: float) -> float:
    # Linear extrapolation outside the characterized range, as STA tools do.
    i0, i1, t = _interp_axis(ax1, x1)
    j0, j1, u = _interp_axis(ax2, x2)
    v00, v01 = vals[i0][j0], vals[i0][j1]
    v10, v11 = vals[i1][j0], vals[i1][j1]
    a = v00 + (v01 - v00) * u
    b = v10 + (v11 - v10) * u
    return a + (b - a) * t


@dataclass(frozen=True)
class Arc:
    related: str
    timing_type: str
    rise: Table | None
    fall: Table | None
    constraint: float = 0.0

    def delay(self, slew: float, load: float) -> float:
        vals = [t.lookup(slew, load) for t in (self.rise, self.fall) if t is not None]
        return max(vals) if vals else 0.0


@dataclass
class Cell:
    name: str
    area: float
    leakage: float
    inputs: dict[str, float] = field(default_factory=dict)
    outputs: dict[str, str | None] = field(default_factory=dict)
    arcs: dict[str, list[Arc]] = field(default_factory=dict)  # keyed by output pin
    energy: float = 0.0
    sequential: bool = False
    clock_pin: str | None = None
    setup: float = 0.0
    state_var: str | None = None


@dataclass
class Library:
    name: str
    voltage: float
    cells: dict[str, Cell]
    default_slew: float


def _table(group, templates: dict[str, tuple[tuple[float, ...], tuple[float, ...]]]) -> Table:
    values = np.atleast_2d(group.get_array("values"))
    tpl = group.args[0] if group.args else "scalar"
    slews, loads = templates.get(_s(tpl), ((0.0,), (0.0,)))
    if values.shape == (1, 1):
        slews, loads = (0.0,), (0.0,)
    elif values.shape[0] == 1 and len(slews) != 1:
        slews = (0.0,)
    rows = tuple(tuple(float(v) for v in row) for row in values)
    return Table(tuple(slews), tuple(loads), rows)


@functools.lru_cache(maxsize=8)
def load_library(path: str | Path) -> Library:
    lib = parse_liberty(Path(path).read_text())
    templates: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = {}
    for tpl in lib.get_groups("lu_table_template"):
        var1 = _s(tpl["variable_1"] or "")
        i1 = tuple(float(x) for x in np.ravel(tpl.get_array("index_1")))
        try:
            i2 = tuple(float(x) for x in np.ravel(tpl.get_array("index_2")))
        except Exception:
            i2 = None
        if i2 is None:
            # 1-D tables: treat the single axis as load.
            templates[_s(tpl.args[0])] = ((0.0,), i1) if "capacitance" in var1 else (i1, (0.0,))
        else:
            templates[_s(tpl.args[0])] = (i1, i2)
    slews = [s for (s, _l) in templates.values() if len(s) > 1]
    default_slew = slews[0][0] if slews else 0.0

    cells: dict[str, Cell] = {}
    for c in lib.get_groups("cell"):
        cell = Cell(
            name=_s(c.args[0]),
            area=float(c["area"] or 0.0),
            leakage=float(c["cell_leakage_power"] or 0.0),
        )
        ffs = c.get_groups("ff")
        if ffs:
            cell.sequential = True
            cell.state_var = _s(ffs[0].args[0])
        energies = []
        for p in c.get_groups("pin"):
            pname = _s(p.args[0])
            direction = _s(p["direction"] or "")
            if direction == "input":
                cell.inputs[pname] = float(p["capacitance"] or 0.0)
                if _s(p["clock"] or "") == "true":
                    cell.clock_pin = pname
            elif direction == "output":
                func = p["function"]
                cell.outputs[pname] = _s(func) if func is not None else None
            for tg in p.get_groups("timing"):
                ttype = _s(tg["timing_type"] or "combinational")
                rel = _s(tg["related_pin"] or "")
                if ttype.startswith("setup"):
                    cons = [float(np.max(g.get_array("values")))
                            for key in ("rise_constraint", "fall_constraint")
                            for g in tg.get_groups(key)]
                    cell.setup = max([cell.setup, *cons])
                    continue
                if ttype.startswith("hold"):
                    continue
                rise = tg.get_groups("cell_rise")
                fall = tg.get_groups("cell_fall")
                arc = Arc(
                    related=rel,
                    timing_type=ttype,
                    rise=_table(rise[0], templates) if rise else None,
                    fall=_table(fall[0], templates) if fall else None,
                )
                cell.arcs.setdefault(pname, []).append(arc)
            for ip in p.get_groups("internal_power"):
                for key in ("rise_power", "fall_power"):
                    for g in ip.get_groups(key):
                        energies.append(float(np.mean(g.get_array("values"))))
        cell.energy = float(np.mean(energies)) if energies else 0.0
        cells[cell.name] = cell

    voltage = float(lib["nom_voltage"] or 1.0)
    return Library(_s(lib.args[0]), voltage, cells, default_slew)


# Boolean functions as written in liberty files: ! ' & * | + ^ and juxtaposition.

def parse_function(expr: str):
    """Compile a liberty function string into a callable over a pin dict."""
    tokens = _tokenize(expr)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def parse_or():
        left = parse_xor()
        while peek() in ("|", "+"):
            take()
            right = parse_xor()
            left = (lambda a, b: lambda env: a(env) | b(env))(left, right)
        return left

    def parse_xor():
        left = parse_and()
        while peek() == "^":
            take()
            right = parse_and()
            left = (lambda a, b: lambda env: a(env) ^ b(env))(left, right)
        return left

    def parse_and():
        left = parse_unary()
        while True:
            tok = peek()
            if tok in ("&", "*"):
                take()
            elif tok is None or tok in ("|", "+", "^", ")"):
                break
            right = parse_unary()
            left = (lambda a, b: lambda env: a(env) & b(env))(left, right)
        return left

    def parse_unary():
        tok = take()
        if tok == "!":
            inner = parse_unary()
            node = lambda env, f=inner: 1 - f(env)  # noqa: E731
        elif tok == "(":
            node = parse_or()
            take()
        elif tok in ("0", "1"):
            node = lambda env, v=int(tok): v  # noqa: E731
        else:
            node = lambda env, name=tok: env[name]  # noqa: E731
        while peek() == "'":
            take()
            node = (lambda f: lambda env: 1 - f(env))(node)
        return node

    fn = parse_or()
    names = sorted({t for t in tokens if t not in "!'&*|+^()01"})
    return fn, names


def _tokenize(expr: str) -> list[str]:
    out, i = [], 0
    while i < len(expr):
        ch = expr[i]
        if ch.isspace():
            i += 1
        elif ch in "!'&*|+^()":
            out.append(ch)
            i += 1
        else:
            j = i
            while j < len(expr) and (expr[j].isalnum() or expr[j] in "_[]."):
                j += 1
            if j == i:
                raise ValueError(f"bad character {ch!r} in function {expr!r}")
            out.append(expr[i:j])
            i = j
    return out
