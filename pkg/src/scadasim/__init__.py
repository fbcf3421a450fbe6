"""Deterministic DNP3/SCADA co-simulation with man-in-the-middle and flooding attacks.

Subpackages and modules:

- ``dnp3`` and ``crc``: link-layer framing, CRC-16/DNP and application objects
- ``grid``: DC power flow, line outage distribution factors and contingency checks
- ``netsim``: discrete-event IP network with a minimal reliable transport
- ``scada``: DNP3 masters, outstations and the grid process they control
- ``attack``: ARP poisoning proxy, in-flight mutation and ICMP flooding
- ``ids``: rule-based intrusion detection on router taps
- ``harness``: scenario configs, runs, sweeps, reports and the command line
"""
__version__ = "0.1.0"
