"""Whitelist learning, signature extraction and rule-driven filtering for IEC 61850 MMS traffic."""

__version__ = "0.1.0"
