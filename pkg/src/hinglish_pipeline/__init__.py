"""Toolkit for building and evaluating code-mixed Hinglish chat corpora.

Submodules map to pipeline stages: corpus (data model, splitting,
export), normalize (variant canonicalization and cleaning), langid
(token-level language tagging), metrics (code-mixing measures), semsim
(embedding similarity), genpipe (synthetic dialogue generation), judge
(rubric-based model comparison), and abtest (human A/B service).
"""

__version__ = "0.1.0"
