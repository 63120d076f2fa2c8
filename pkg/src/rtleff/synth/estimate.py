"""Static timing and probabilistic power estimation on a mapped netlist.

Yosys writes the mapped design as JSON; this module reads it together with the
liberty file and produces ``timing.rpt`` and ``power.rpt``. It is the timing
and power companion of the open-source synthesis backend.

Timing model
    Each arc delay is the larger of the rise and fall table values evaluated
    at a fixed input slew (the first characterized slew) and at the driven
    net's load. Load is the sum of sink pin capacitances, a per-fanout wire
    capacitance and a fixed load on primary outputs. Paths start at primary
    inputs and flop outputs and end at primary outputs and flop data pins
    (plus setup). No slew propagation.

Power model
    Primary inputs and flop outputs are 1 with probability ``input_prob``.
    Signal probabilities propagate through cell functions assuming spatial
    independence; toggle rate per cycle is ``2 p (1 - p)``. Total power is
    leakage + internal energy per output toggle + 1/2 C V^2 per net toggle +
    the clock net charging twice per cycle, at ``freq_mhz``.

Run as ``python -m rtleff.synth.estimate --netlist n.json --liberty x.lib
--top m --out reports/``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

from rtleff.synth.liberty import Cell, Library, load_library, parse_function

WIRE_CAP_PER_FANOUT = 0.0005  # pF
OUTPUT_LOAD = 0.002  # pF


@dataclass(frozen=True)
class Assumptions:
    freq_mhz: float = 100.0
    input_prob: float = 0.5
    wire_cap_per_fanout_pf: float = WIRE_CAP_PER_FANOUT
    output_load_pf: float = OUTPUT_LOAD


@dataclass
class Estimate:
    delay_ns: float
    power_mw: float
    leakage_mw: float
    dynamic_mw: float
    clock_mw: float
    area: float
    critical_path: list[str] = field(default_factory=list)
    unmapped: list[str] = field(default_factory=list)
    loops: int = 0


@dataclass
class _Inst:
    name: str
    cell: Cell
    conns: dict[str, list]


def _top_module(netlist: dict, top: str | None) -> dict:
    mods = netlist["modules"]
    if top and top in mods:
        return mods[top]
    for m in mods.values():
        if str(m.get("attributes", {}).get("top", "0")).strip("0") != "":
            return m
    if len(mods) == 1:
        return next(iter(mods.values()))
    raise ValueError(f"top module {top!r} not found in netlist")


def estimate(netlist: dict, lib: Library, top: str | None = None,
             assumptions: Assumptions = Assumptions()) -> Estimate:
    mod = _top_module(netlist, top)
    a = assumptions
    insts: list[_Inst] = []
    unmapped: list[str] = []
    for name, c in sorted(mod.get("cells", {}).items()):
        cell = lib.cells.get(c["type"])
        if cell is None:
            if not c["type"].startswith("$scopeinfo"):
                unmapped.append(c["type"])
            continue
        insts.append(_Inst(name, cell, c["connections"]))

    driver: dict[int, tuple[_Inst, str]] = {}
    sinks: dict[int, list[tuple[_Inst, str]]] = {}
    for inst in insts:
        for pin, bits in inst.conns.items():
            for b in bits:
                if not isinstance(b, int):
                    continue
                if pin in inst.cell.outputs:
                    driver[b] = (inst, pin)
                elif pin in inst.cell.inputs:
                    sinks.setdefault(b, []).append((inst, pin))

    pi_bits: set[int] = set()
    po_bits: set[int] = set()
    for port in mod.get("ports", {}).values():
        ints = [b for b in port["bits"] if isinstance(b, int)]
        if port["direction"] in ("input", "inout"):
            pi_bits.update(ints)
        if port["direction"] in ("output", "inout"):
            po_bits.update(ints)

    def load(bit: int) -> float:
        ss = sinks.get(bit, [])
        cap = sum(inst.cell.inputs[pin] for inst, pin in ss)
        cap += a.wire_cap_per_fanout_pf * len(ss)
        if bit in po_bits:
            cap += a.output_load_pf
        return cap

    # ---- timing
    slew = lib.default_slew
    arrival: dict[int, float] = {}
    pred: dict[int, int | None] = {}
    loops = 0
    on_stack: set[int] = set()

    def arr(bit) -> float:
        nonlocal loops
        if not isinstance(bit, int):
            return 0.0
        if bit in arrival:
            return arrival[bit]
        if bit in pi_bits or bit not in driver:
            arrival[bit], pred[bit] = 0.0, None
            return 0.0
        inst, pin = driver[bit]
        arcs = inst.cell.arcs.get(pin, [])
        if inst.cell.sequential:
            d = max((arc.delay(slew, load(bit)) for arc in arcs), default=0.0)
            arrival[bit], pred[bit] = d, None
            return d
        if bit in on_stack:
            loops += 1
            return 0.0
        on_stack.add(bit)
        best, best_src = 0.0, None
        for arc in arcs:
            for src in inst.conns.get(arc.related, []):
                t = arr(src) + arc.delay(slew, load(bit))
                if t > best:
                    best, best_src = t, src if isinstance(src, int) else None
        on_stack.discard(bit)
        arrival[bit], pred[bit] = best, best_src
        return best

    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000 + 4 * len(insts)))
    endpoints: list[tuple[float, int]] = []
    for b in sorted(po_bits):
        endpoints.append((arr(b), b))
    for inst in insts:
        if inst.cell.sequential:
            for pin, bits in inst.conns.items():
                if pin in inst.cell.inputs and pin != inst.cell.clock_pin:
                    extra = inst.cell.setup if pin == "D" else 0.0
                    for b in bits:
                        if isinstance(b, int):
                            endpoints.append((arr(b) + extra, b))
    delay, end_bit = max(endpoints, default=(0.0, None))
    path: list[str] = []
    cur = end_bit
    while cur is not None and len(path) < 10000:
        drv = driver.get(cur)
        path.append(f"{drv[0].cell.name}:{drv[0].name}" if drv else f"port:{cur}")
        cur = pred.get(cur)
    path.reverse()

    # ---- power
    prob: dict[int, float] = {}
    compiled: dict[tuple[str, str], tuple] = {}

    def p_of(bit) -> float:
        if bit == "1":
            return 1.0
        if not isinstance(bit, int):
            return 0.0
        if bit in prob:
            return prob[bit]
        if bit in pi_bits or bit not in driver:
            prob[bit] = a.input_prob if bit in pi_bits else 0.0
            return prob[bit]
        inst, pin = driver[bit]
        func = inst.cell.outputs.get(pin)
        if inst.cell.sequential or not func:
            prob[bit] = a.input_prob
            return prob[bit]
        prob[bit] = a.input_prob  # provisional value breaks loops
        key = (inst.cell.name, pin)
        if key not in compiled:
            compiled[key] = parse_function(func)
        fn, names = compiled[key]
        ps = {n: p_of(inst.conns[n][0]) if inst.conns.get(n) else 0.0 for n in names}
        total = 0.0
        for combo in product((0, 1), repeat=len(names)):
            w = 1.0
            for n, v in zip(names, combo):
                w *= ps[n] if v else 1.0 - ps[n]
            if w and fn(dict(zip(names, combo))):
                total += w
        prob[bit] = total
        return total

    f_hz = a.freq_mhz * 1e6
    v2 = lib.voltage ** 2
    dyn_w = 0.0
    clk_w = 0.0
    for inst in insts:
        for pin, bits in inst.conns.items():
            if pin not in inst.cell.outputs:
                continue
            for b in bits:
                if not isinstance(b, int):
                    continue
                p = p_of(b)
                alpha = 2.0 * p * (1.0 - p)
                dyn_w += alpha * f_hz * inst.cell.energy * 1e-12
                dyn_w += alpha * f_hz * 0.5 * load(b) * 1e-12 * v2
        if inst.cell.sequential and inst.cell.clock_pin:
            clk_w += f_hz * inst.cell.inputs[inst.cell.clock_pin] * 1e-12 * v2
    leak_w = sum(inst.cell.leakage for inst in insts) * 1e-9
    area = sum(inst.cell.area for inst in insts)
    return Estimate(
        delay_ns=delay,
        power_mw=(leak_w + dyn_w + clk_w) * 1e3,
        leakage_mw=leak_w * 1e3,
        dynamic_mw=dyn_w * 1e3,
        clock_mw=clk_w * 1e3,
        area=area,
        critical_path=path,
        unmapped=sorted(set(unmapped)),
        loops=loops,
    )


def render_timing(est: Estimate, a: Assumptions) -> str:
    lines = [
        "Static timing estimate",
        f"Critical path delay: {est.delay_ns:.6f} ns",
        f"Path depth: {max(len(est.critical_path) - 1, 0)}",
    ]
    if est.loops:
        lines.append(f"Combinational loops broken: {est.loops}")
    if est.unmapped:
        lines.append("Unmapped cells ignored: " + ", ".join(est.unmapped))
    lines.append("Path:")
    lines.extend(f"  {step}" for step in est.critical_path)
    return "\n".join(lines) + "\n"


def render_power(est: Estimate, a: Assumptions) -> str:
    lines = [
        "Power estimate",
        f"Total power: {est.power_mw:.9f} mW",
        f"Leakage power: {est.leakage_mw:.9f} mW",
        f"Switching power: {est.dynamic_mw:.9f} mW",
        f"Clock power: {est.clock_mw:.9f} mW",
        "Assumptions: " + json.dumps(asdict(a), sort_keys=True),
    ]
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="rtleff.synth.estimate", description=__doc__.split("\n")[0])
    ap.add_argument("--netlist", required=True)
    ap.add_argument("--liberty", required=True)
    ap.add_argument("--top")
    ap.add_argument("--out", required=True, help="report directory")
    ap.add_argument("--freq-mhz", type=float, default=100.0)
    ap.add_argument("--input-prob", type=float, default=0.5)
    args = ap.parse_args(argv)
    a = Assumptions(freq_mhz=args.freq_mhz, input_prob=args.input_prob)
    netlist = json.loads(Path(args.netlist).read_text())
    est = estimate(netlist, load_library(str(Path(args.liberty).resolve())), args.top, a)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "timing.rpt").write_text(render_timing(est, a))
    (out / "power.rpt").write_text(render_power(est, a))
    return 0


if __name__ == "__main__":
    sys.exit(main())
