"""Facts-grounded ensemble dialogue system.

A neural encoder-decoder with a two-hop facts memory, a diversity- and
facts-aware beam search, a BM25F retrieval module, and a feature-based
reranker, wired together behind a chat service and CLI.
"""

__version__ = "0.1.0"
