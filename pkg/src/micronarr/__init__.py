"""Causal micro-narrative toolkit.

A micro-narrative is a sentence-level explanation of the cause(s) and/or
effect(s) of a target subject (e.g. inflation).  This package covers the
full workflow around that idea: filtering news corpora down to candidate
sentences, collecting human annotations through a small web service,
deriving majority-vote gold labels, measuring inter-annotator agreement,
driving an LLM endpoint to classify sentences at scale, and scoring the
results.
"""

__version__ = "0.1.0"
