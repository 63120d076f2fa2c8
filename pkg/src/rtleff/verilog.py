"""Lightweight Verilog text utilities.

This is not a parser. It finds ``module ... endmodule`` regions, reads the
port names from a module header and rewrites module names, which is all the
harness needs. Comments and string literals are masked before any regex is
applied so that offsets stay valid in the original text.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

_MODULE_RE = re.compile(r"\b(?:module|macromodule)\s+([A-Za-z_][A-Za-z0-9_$]*)")
_ENDMODULE_RE = re.compile(r"\bendmodule\b(\s*:\s*([A-Za-z_][A-Za-z0-9_$]*))?")
_PUNCT_SPACE_RE = re.compile(r" ?([^\w\s$'`]) ?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")

_PORT_KEYWORDS = {
    "input", "output", "inout", "wire", "reg", "logic", "signed", "unsigned",
    "var", "tri", "integer", "bit", "byte", "int", "shortint", "longint",
    "supply0", "supply1", "wand", "wor", "uwire", "real",
}


def mask_comments(text: str) -> str:
    """Return ``text`` with comments and string literals replaced by spaces.

    Newlines are kept so line numbers survive.
    """
    out = list(text)
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            j = text.find("\n", i)
            j = n if j < 0 else j
            for k in range(i, j):
                out[k] = " "
            i = j
        elif c == "/" and i + 1 < n and text[i + 1] == "*":
            j = text.find("*/", i + 2)
            j = n if j < 0 else j + 2
            for k in range(i, j):
                if out[k] != "\n":
                    out[k] = " "
            i = j
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"' and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            j = min(j + 1, n)
            for k in range(i, j):
                out[k] = " "
            i = j
        else:
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class ModuleSpan:
    name: str
    start: int        # offset of the ``module`` keyword
    end: int          # offset just past ``endmodule`` (and its label)
    name_start: int
    name_end: int
    label_span: tuple[int, int] | None  # ``endmodule : label`` identifier

    def text(self, source: str) -> str:
        return source[self.start:self.end]


def find_modules(text: str) -> list[ModuleSpan]:
    """Locate every complete ``module ... endmodule`` region, in order."""
    masked = mask_comments(text)
    spans: list[ModuleSpan] = []
    pos = 0
    while True:
        m = _MODULE_RE.search(masked, pos)
        if m is None:
            break
        e = _ENDMODULE_RE.search(masked, m.end())
        if e is None:
            break
        nxt = _MODULE_RE.search(masked, m.end(), e.start())
        if nxt is not None:
            # A module without endmodule; skip to the next declaration.
            pos = nxt.start()
            continue
        label = (e.start(2), e.end(2)) if e.group(2) else None
        spans.append(ModuleSpan(m.group(1), m.start(), e.end(), m.start(1), m.end(1), label))
        pos = e.end()
    return spans


def module_names(text: str) -> list[str]:
    return [s.name for s in find_modules(text)]


def _balanced(masked: str, open_at: int) -> int:
    """Index just past the parenthesis group opening at ``open_at``."""
    depth = 0
    for i in range(open_at, len(masked)):
        ch = masked[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i + 1
    raise ValueError("unbalanced parentheses in module header")


def _split_top(s: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p for p in (x.strip() for x in parts) if p]


def header_ports(text: str, module: str | None = None) -> list[str]:
    """Port names declared in a module header, in declaration order.

    Works on a bare header (``module m (...);`` with no body) as well as on a
    full module. ``module`` selects a module by name when several exist.
    """
    masked = mask_comments(text)
    matches = list(_MODULE_RE.finditer(masked))
    if module is not None:
        matches = [m for m in matches if m.group(1) == module]
    if not matches:
        raise ValueError("no module declaration found")
    i = matches[0].end()
    n = len(masked)

    def skip_ws(k: int) -> int:
        while k < n and masked[k].isspace():
            k += 1
        return k

    i = skip_ws(i)
    if i < n and masked[i] == "#":
        i = skip_ws(i + 1)
        if i < n and masked[i] == "(":
            i = skip_ws(_balanced(masked, i))
    if i >= n or masked[i] != "(":
        return []
    close = _balanced(masked, i)
    body = masked[i + 1:close - 1]
    names = []
    for item in _split_top(body):
        item = re.sub(r"\[[^\]]*\]", " ", item)
        item = item.split("=", 1)[0]
        idents = [t for t in _IDENT_RE.findall(item) if t not in _PORT_KEYWORDS]
        if idents:
            names.append(idents[-1])
    return names


def rename_module(text: str, new_name: str, old_name: str | None = None) -> str:
    """Rename one module declaration (and its ``endmodule`` label).

    With ``old_name`` unset the single module in ``text`` is renamed; with
    several modules present the caller must say which one. Port names and
    every other identifier are left untouched.
    """
    spans = find_modules(text)
    if old_name is not None:
        spans = [s for s in spans if s.name == old_name]
    if not spans:
        raise ValueError("no module declaration found")
    if len(spans) > 1:
        raise ValueError(f"ambiguous rename: {len(spans)} candidate modules")
    s = spans[0]
    if s.name == new_name:
        return text
    out = text
    if s.label_span is not None:
        a, b = s.label_span
        out = out[:a] + new_name + out[b:]
    return out[:s.name_start] + new_name + out[s.name_end:]


def normalize(text: str, top: str | None = None, canonical: str = "dut") -> str:
    """Canonical form used for content hashing.

    Comments are removed, whitespace is collapsed and the top module is
    renamed to ``canonical`` so that the same design under different module
    names hashes identically.
    """
    spans = find_modules(text)
    if spans:
        target = top if top is not None and top in {s.name for s in spans} else spans[-1].name
        if len(spans) == 1 or top is not None:
            text = rename_module(text, canonical, target if len(spans) > 1 else None)
    collapsed = " ".join(mask_comments(text).split())
    return _PUNCT_SPACE_RE.sub(r"\1", collapsed)


def design_digest(text: str, top: str | None = None) -> str:
    return hashlib.sha256(normalize(text, top).encode()).hexdigest()


def pick_top(text: str, ports: list[str] | set[str], prefer: str | None = None) -> str | None:
    """Name of the module that implements an interface.

    ``prefer`` wins when a module of that name exists. Otherwise the module
    whose port-name set equals ``ports`` is chosen, the last one on ties, and
    the last module in the file when nothing matches.
    """
    spans = find_modules(text)
    if not spans:
        return None
    names = [s.name for s in spans]
    if prefer is not None and prefer in names:
        return prefer
    want = set(ports)
    matching = []
    for s in spans:
        try:
            if set(header_ports(s.text(text))) == want:
                matching.append(s.name)
        except ValueError:
            continue
    return matching[-1] if matching else names[-1]


def declared_names(text: str) -> list[str]:
    """Module names declared in ``text``, including bare headers with no body."""
    return _MODULE_RE.findall(mask_comments(text))


_STRUCTURE_PAIRS = (("(", ")"), ("[", "]"), ("{", "}"))
_KEYWORD_PAIRS = (("begin", "end"), ("case", "endcase"), ("function", "endfunction"),
                  ("generate", "endgenerate"), ("task", "endtask"))


def structural_problems(src: str) -> list[str]:
    """Cheap syntax sanity checks used by the mock simulator and backend."""
    masked = mask_comments(src)
    out = []
    if not find_modules(src):
        out.append("no module ... endmodule region")
    if len(re.findall(r"\bmodule\b", masked)) != len(re.findall(r"\bendmodule\b", masked)):
        out.append("unbalanced module/endmodule")
    for a, b in _STRUCTURE_PAIRS:
        if masked.count(a) != masked.count(b):
            out.append(f"unbalanced {a}{b}")
    for a, b in _KEYWORD_PAIRS:
        if a == "case":
            opens = len(re.findall(r"\bcase[zx]?\b", masked))
        else:
            opens = len(re.findall(rf"\b{a}\b", masked))
        if opens != len(re.findall(rf"\b{b}\b", masked)):
            out.append(f"unbalanced {a}/{b}")
    return out
