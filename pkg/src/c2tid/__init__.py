"""Textual docids built from hierarchical cluster paths, plus a small generative-retrieval harness.

Pipeline: ingest and embed a corpus, cluster it into a k-ary tree, label each
node with its most frequent metadata keywords, render docids, compile them
into a prefix trie and rank documents with trie-constrained beam search.
"""

__version__ = "0.1.0"
