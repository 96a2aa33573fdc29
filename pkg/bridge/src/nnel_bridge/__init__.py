"""Encoder bridge for the linking engine.

A separate process that provides real-model embeddings and cross-encoder
scores strictly through documented interfaces: the EMB1 embedding file
format, the line-delimited JSON scorer protocol, and the training-pairs
JSONL format. No in-memory state is shared with the engine.
"""

__version__ = "0.1.0"
