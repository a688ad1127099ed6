"""Walk through the edit alignment layer.

Aligns a few sentence pairs, renders the tag rows, and summarizes a small
synthetic corpus. Run from the repo root after installing the package:

    python3 demos/01_align_and_stats.py
"""

from editrep.alignment import align, changed_tokens, edit_stats
from editrep.corpus import gen_synthetic

PAIRS = [
    ("the cat sat on the mat", "the cat slept on the mat"),
    ("he walk to school", "he walks to school every day"),
    ("remove this redundant redundant word", "remove this redundant word"),
    ("same sentence", "same sentence"),
]


def show(src: str, tgt: str) -> None:
    edit = align(tuple(src.split()), tuple(tgt.split()))
    width = [max(len(a), len(b), 1) for a, b in zip(edit.src_padded, edit.tgt_padded)]
    row = lambda toks: "  ".join(t.ljust(w) for t, w in zip(toks, width))
    print(f"src: {row(edit.src_padded)}")
    print(f"tgt: {row(edit.tgt_padded)}")
    print(f"tag: {row([t.value for t in edit.tags])}")
    print(f"     changed tokens: {list(changed_tokens(edit))}\n")


def main() -> None:
    print("=== alignments ===\n")
    for src, tgt in PAIRS:
        show(src, tgt)

    # the generator draws one rule class per example, so the tag mix below
    # reflects the class ratios rather than natural text
    print("=== synthetic corpus stats ===\n")
    corpus = gen_synthetic(500, seed=7)
    aligned = [align(e.src, e.tgt) for e in corpus]
    stats = edit_stats(aligned)
    for key, value in sorted(stats.to_dict().items()):
        print(f"{key:>24}: {value}")


if __name__ == "__main__":
    main()
