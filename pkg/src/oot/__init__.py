"""Desk-scale remote debugging sandbox.

A pair of small stack-machine VMs (one playing the deployed device, one
the developer-side reconstruction) exchange execution snapshots over a
binary protocol, so that stepping and inspection happen locally while
the device keeps running. Device-only resources are reachable through
per-function access strategies (proxy, cached value, mock), and fixes
ship back as whole-module updates.
"""

__version__ = "0.1.0"
