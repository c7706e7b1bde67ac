"""Cross-tenant isolation auditor for shared web hosting servers."""

__version__ = "0.1.0"
