"""Learning dense vector representations of document edits.

The package pairs a token-level edit aligner with a family of sequence
models that compress an aligned (source, target) pair into a fixed-size
edit vector, plus the metrics and probing tools used to judge how much of
the edit survives the compression.
"""

__version__ = "0.1.0"

from .alignment import AlignedEdit, EditTag, align, changed_tokens, edit_stats
from .corpus import EditExample, Vocabulary, gen_synthetic, load_jsonl, split

__all__ = [
    "AlignedEdit",
    "EditTag",
    "align",
    "changed_tokens",
    "edit_stats",
    "EditExample",
    "Vocabulary",
    "gen_synthetic",
    "load_jsonl",
    "split",
    "__version__",
]
