"""Ledger-backed interworking model for the wireless air interface.

Subpackages map to the model layers: ``ledger`` (block store, route store,
distribution, contracts), ``identity`` (host identities, profiling, access),
``spectrum`` (simulated radio, localization, VLAN gating) and ``netsim``
(discrete-event scenarios driving all of them).
"""

__version__ = "0.1.0"
