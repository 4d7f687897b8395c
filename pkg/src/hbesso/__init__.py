"""Federated single sign-on toolkit.

Building blocks: the HBE block cipher (`cipher`), a one-time polynomial MAC
(`polymac`), the key-exchange layer with seal/open authenticated encryption
(`keyexchange`), a minimal SAML message dialect (`saml`), identity-provider
and service-provider services (`idp`, `sp`), a scripted user agent
(`agent`) and a benchmark harness (`bench`).
"""

__version__ = "0.1.0"
