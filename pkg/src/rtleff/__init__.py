"""Efficiency-aware evaluation harness for generated Verilog."""

__version__ = "0.1.0"
