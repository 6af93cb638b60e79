"""Finite-difference solver and verification harness for the simplified
Ericksen-Leslie system of nematic liquid-crystal flow in (u, F = grad d) form."""

__version__ = "0.1.0"
