"""Regenerate the bundled demonstration cell libraries.

    python tools/gen_liberty.py src/rtleff/data/lib

The numbers are synthetic. They keep the relative ordering one expects from a
real library (inverters are small and fast, XOR and MUX are big and slow,
flops dominate leakage) so that area/delay/power trade-offs are visible.
"""

from __future__ import annotations

import sys
from pathlib import Path

# name, area, inputs, function, intrinsic ns, drive ns/pF, leakage nW, energy pJ
COMB = [
    ("INV_X1", 3.75, ["A"], "!A", 0.045, 4.0, 0.9, 0.0020),
    ("BUF_X1", 3.75, ["A"], "A", 0.09, 3.0, 1.1, 0.0030),
    ("NAND2_X1", 3.75, ["A", "B"], "!(A&B)", 0.06, 4.5, 1.2, 0.0025),
    ("NOR2_X1", 3.75, ["A", "B"], "!(A|B)", 0.08, 6.0, 1.0, 0.0025),
    ("AND2_X1", 6.26, ["A", "B"], "(A&B)", 0.12, 3.5, 1.8, 0.0045),
    ("OR2_X1", 6.26, ["A", "B"], "(A|B)", 0.14, 3.5, 1.7, 0.0045),
    ("XOR2_X1", 8.76, ["A", "B"], "(A^B)", 0.17, 5.0, 2.6, 0.0075),
    ("XNOR2_X1", 8.76, ["A", "B"], "!(A^B)", 0.17, 5.0, 2.6, 0.0075),
    ("AOI21_X1", 5.0, ["A1", "A2", "B"], "!((A1&A2)|B)", 0.10, 6.0, 1.4, 0.0035),
    ("OAI21_X1", 5.0, ["A1", "A2", "B"], "!((A1|A2)&B)", 0.10, 6.0, 1.4, 0.0035),
    ("MUX2_X1", 11.26, ["A", "B", "S"], "((A&!S)|(B&S))", 0.19, 4.0, 3.2, 0.0090),
]
# name, area, extra ff attribute, extra pin
FLOPS = [
    ("DFF_X1", 20.02, "", None),
    ("DFFR_X1", 25.02, ' clear : "R" ;', "R"),
    ("DFFS_X1", 25.02, ' preset : "S" ;', "S"),
]
FF_LEAK, FF_CLKQ, FF_SETUP, FF_ENERGY, FF_DRIVE = 7.5, 0.30, 0.12, 0.012, 3.0
PIN_CAP, FF_PIN_CAP = 0.0024, 0.0020
LOADS = (0.001, 0.1)
SLEWS = (0.01, 0.5)

PROCESSES = {
    # name: voltage, area scale, delay scale, leakage scale, energy scale
    "generic130": (1.8, 1.0, 1.0, 1.0, 1.0),
    "generic65": (1.0, 0.27, 0.55, 6.0, 0.30),
}


def _row(intrinsic: float, drive: float, ds: float) -> str:
    vals = ", ".join(f"{(intrinsic + drive * c) * ds:.5f}" for c in LOADS)
    return f'("{vals}", "{vals}")'


def _arc(related: str, intrinsic: float, drive: float, ds: float, edge: str = "") -> str:
    trans = _row(0.02, 1.5, ds)
    kind = f"        timing_type : {edge} ;\n" if edge else "        timing_sense : non_unate ;\n"
    return (
        "      timing () {\n"
        f'        related_pin : "{related}" ;\n'
        + kind
        + f"        cell_rise (delay_2d) {{ values {_row(intrinsic, drive, ds)} ; }}\n"
        f"        cell_fall (delay_2d) {{ values {_row(intrinsic, drive, ds)} ; }}\n"
        f"        rise_transition (delay_2d) {{ values {trans} ; }}\n"
        f"        fall_transition (delay_2d) {{ values {trans} ; }}\n"
        "      }\n"
    )


def _power(energy: float) -> str:
    return (
        "      internal_power () {\n"
        f'        rise_power (scalar) {{ values ("{energy:.6f}") ; }}\n'
        f'        fall_power (scalar) {{ values ("{energy:.6f}") ; }}\n'
        "      }\n"
    )


def render(name: str) -> str:
    volt, sa, sd, sl, se = PROCESSES[name]
    out = [
        f"/* Generic demonstration cell library ({name}).\n"
        "   Values are synthetic and exist to exercise the synthesis flow;\n"
        "   they do not describe any foundry process. */\n",
        f"library ({name}) {{\n",
        "  delay_model : table_lookup ;\n",
        '  time_unit : "1ns" ;\n',
        '  voltage_unit : "1V" ;\n',
        '  current_unit : "1mA" ;\n',
        '  leakage_power_unit : "1nW" ;\n',
        "  capacitive_load_unit (1,pf) ;\n",
        '  pulling_resistance_unit : "1kohm" ;\n',
        f"  nom_voltage : {volt} ;\n",
        "  nom_temperature : 25.0 ;\n",
        "  nom_process : 1.0 ;\n",
        "  default_max_transition : 1.5 ;\n",
        "  lu_table_template (delay_2d) {\n",
        "    variable_1 : input_net_transition ;\n",
        "    variable_2 : total_output_net_capacitance ;\n",
        f'    index_1 ("{SLEWS[0]}, {SLEWS[1]}") ;\n',
        f'    index_2 ("{LOADS[0]}, {LOADS[1]}") ;\n',
        "  }\n",
    ]
    for cname, area, pins, func, intr, drive, leak, energy in COMB:
        out.append(f"  cell ({cname}) {{\n")
        out.append(f"    area : {area * sa:.4f} ;\n")
        out.append(f"    cell_leakage_power : {leak * sl:.4f} ;\n")
        for p in pins:
            out.append(f"    pin ({p}) {{ direction : input ; capacitance : {PIN_CAP:.5f} ; }}\n")
        out.append("    pin (Y) {\n      direction : output ;\n")
        out.append(f'      function : "{func}" ;\n      max_capacitance : 0.2 ;\n')
        for p in pins:
            out.append(_arc(p, intr, drive, sd))
        out.append(_power(energy * se))
        out.append("    }\n  }\n")
    for cname, area, ffattr, extra in FLOPS:
        out.append(f"  cell ({cname}) {{\n")
        out.append(f"    area : {area * sa:.4f} ;\n")
        out.append(f"    cell_leakage_power : {FF_LEAK * sl:.4f} ;\n")
        out.append(f'    ff (IQ, IQN) {{ next_state : "D" ; clocked_on : "CLK" ;{ffattr} }}\n')
        out.append(f"    pin (CLK) {{ direction : input ; clock : true ; capacitance : {FF_PIN_CAP:.5f} ; }}\n")
        out.append(f"    pin (D) {{ direction : input ; capacitance : {FF_PIN_CAP:.5f} ;\n")
        out.append(
            "      timing () {\n"
            '        related_pin : "CLK" ;\n'
            "        timing_type : setup_rising ;\n"
            f'        rise_constraint (scalar) {{ values ("{FF_SETUP * sd:.5f}") ; }}\n'
            f'        fall_constraint (scalar) {{ values ("{FF_SETUP * sd:.5f}") ; }}\n'
            "      }\n    }\n"
        )
        if extra:
            out.append(f"    pin ({extra}) {{ direction : input ; capacitance : {FF_PIN_CAP:.5f} ; }}\n")
        out.append('    pin (Q) {\n      direction : output ;\n      function : "IQ" ;\n')
        out.append(_arc("CLK", FF_CLKQ, FF_DRIVE, sd, edge="rising_edge"))
        out.append(_power(FF_ENERGY * se))
        out.append("    }\n  }\n")
    out.append("}\n")
    return "".join(out)


def main(argv: list[str]) -> int:
    dest = Path(argv[1] if len(argv) > 1 else ".")
    for name in PROCESSES:
        (dest / f"{name}.lib").write_text(render(name))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
