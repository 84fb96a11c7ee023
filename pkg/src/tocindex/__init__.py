"""Toolkit for locating and structuring tables of contents in paged documents.

The pipeline turns a paged text document into a nested heading index:
page ingestion (:mod:`tocindex.pagedoc`), ToC-page classification
(:mod:`tocindex.toclocator`), structuring via a deterministic line grammar
(:mod:`tocindex.tocgrammar`) or a chat-completion backend
(:mod:`tocindex.llmbackend`), exact-match scoring
(:mod:`tocindex.evaluator`), and persistence plus HTTP/CLI front ends
(:mod:`tocindex.pipeline`, :mod:`tocindex.service`, :mod:`tocindex.cli`).
"""

__version__ = "0.1.0"
