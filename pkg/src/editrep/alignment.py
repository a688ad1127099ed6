"""Token-level edit matching.

Turns an (original, revised) token pair into a pair of padded sequences of a
common length plus a per-position tag telling what happened there: kept,
inserted, deleted, or replaced.  Equal positions are a longest common
subsequence of the two sides; inside each run of non-equal positions,
deletions and insertions are zipped together into replacements.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

PHI = "<phi>"

TokenSeq = Sequence[str]


class EditTag(str, Enum):
    EQUAL = "="
    INSERT = "+"
    DELETE = "-"
    REPLACE = "⇔"

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"EditTag.{self.name}"


@dataclass(frozen=True)
class AlignedEdit:
    """Padded (src, tgt, tags) triple of one common length.

    Stripping every ``PHI`` from ``src_padded`` recovers the original source
    tokens exactly, and likewise for the target side.
    """

    src_padded: tuple[str, ...]
    tgt_padded: tuple[str, ...]
    tags: tuple[EditTag, ...]

    @property
    def m(self) -> int:
        return len(self.tags)

    @property
    def src(self) -> tuple[str, ...]:
        return tuple(t for t in self.src_padded if t != PHI)

    @property
    def tgt(self) -> tuple[str, ...]:
        return tuple(t for t in self.tgt_padded if t != PHI)

    def validate(self) -> None:
        """Raise ValueError unless every per-position tag invariant holds."""
        if not (len(self.src_padded) == len(self.tgt_padded) == len(self.tags)):
            raise ValueError("padded sides and tags must share one length")
        for i, (s, t, tag) in enumerate(
            zip(self.src_padded, self.tgt_padded, self.tags)
        ):
            ok = {
                EditTag.EQUAL: s == t != PHI,
                EditTag.INSERT: s == PHI and t != PHI,
                EditTag.DELETE: s != PHI and t == PHI,
                EditTag.REPLACE: s != PHI and t != PHI and s != t,
            }[tag]
            if not ok:
                raise ValueError(f"tag {tag.value} inconsistent at position {i}: ({s!r}, {t!r})")


@dataclass
class EditStats:
    """Corpus-level tag profile, mirroring the usual dataset summary table."""

    size: int
    frac_only_insert: float
    frac_only_delete: float
    frac_only_replace: float
    mean_length: float

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "frac_only_insert": self.frac_only_insert,
            "frac_only_delete": self.frac_only_delete,
            "frac_only_replace": self.frac_only_replace,
            "mean_length": self.mean_length,
        }


def lcs_table(src: TokenSeq, tgt: TokenSeq) -> list[list[int]]:
    """Suffix DP table: table[i][j] = LCS length of src[i:] and tgt[j:]."""
    t, n = len(src), len(tgt)
    table = [[0] * (n + 1) for _ in range(t + 1)]
    for i in range(t - 1, -1, -1):
        row, below = table[i], table[i + 1]
        si = src[i]
        for j in range(n - 1, -1, -1):
            if si == tgt[j]:
                row[j] = below[j + 1] + 1
            else:
                a, b = below[j], row[j + 1]
                row[j] = a if a >= b else b
    return table


def lcs_length(src: TokenSeq, tgt: TokenSeq) -> int:
    return lcs_table(src, tgt)[0][0]


def _check_phi_free(seq: TokenSeq, side: str) -> None:
    if PHI in seq:
        raise ValueError(f"{side} contains the reserved pad token {PHI!r}")


def align(src: TokenSeq, tgt: TokenSeq) -> AlignedEdit:
    """Align two token sequences into a padded, tagged edit.

    The Equal positions form a longest common subsequence; ties are broken
    deterministically by walking the DP table front-to-back preferring
    match > delete > insert, which picks matches at the smallest source
    index.  Within each maximal non-Equal gap the k-th deleted token is
    paired with the k-th inserted token as a replacement; surplus positions
    stay deletions or insertions.  Empty sides are allowed and produce pure
    insert or delete alignments.
    """
    _check_phi_free(src, "src")
    _check_phi_free(tgt, "tgt")
    table = lcs_table(src, tgt)
    t, n = len(src), len(tgt)

    # op stream before gap merging: (tag, src token or None, tgt token or None)
    ops: list[tuple[EditTag, str | None, str | None]] = []
    i = j = 0
    while i < t and j < n:
        if src[i] == tgt[j] and table[i][j] == table[i + 1][j + 1] + 1:
            ops.append((EditTag.EQUAL, src[i], tgt[j]))
            i += 1
            j += 1
        elif table[i + 1][j] == table[i][j]:
            ops.append((EditTag.DELETE, src[i], None))
            i += 1
        else:
            ops.append((EditTag.INSERT, None, tgt[j]))
            j += 1
    for k in range(i, t):
        ops.append((EditTag.DELETE, src[k], None))
    for k in range(j, n):
        ops.append((EditTag.INSERT, None, tgt[k]))

    src_out: list[str] = []
    tgt_out: list[str] = []
    tags: list[EditTag] = []

    def flush_gap(dels: list[str], ins: list[str]) -> None:
        k = min(len(dels), len(ins))
        for d, s in zip(dels[:k], ins[:k]):
            src_out.append(d)
            tgt_out.append(s)
            tags.append(EditTag.REPLACE)
        for d in dels[k:]:
            src_out.append(d)
            tgt_out.append(PHI)
            tags.append(EditTag.DELETE)
        for s in ins[k:]:
            src_out.append(PHI)
            tgt_out.append(s)
            tags.append(EditTag.INSERT)

    dels: list[str] = []
    ins: list[str] = []
    for tag, s_tok, t_tok in ops:
        if tag is EditTag.EQUAL:
            flush_gap(dels, ins)
            dels, ins = [], []
            src_out.append(s_tok)
            tgt_out.append(t_tok)
            tags.append(EditTag.EQUAL)
        elif tag is EditTag.DELETE:
            dels.append(s_tok)
        else:
            ins.append(t_tok)
    flush_gap(dels, ins)

    return AlignedEdit(tuple(src_out), tuple(tgt_out), tuple(tags))


def changed_tokens(edit: AlignedEdit) -> tuple[str, ...]:
    """Tokens touched by the edit, target side first.

    Returns the target-side tokens at Insert and Replace positions followed
    by the source-side tokens at Delete positions, each group left to right.
    The downstream bag-of-changed-tokens loss treats this as unordered, so
    any fixed order works; this one is the convention everywhere here.
    """
    out = [t for t, tag in zip(edit.tgt_padded, edit.tags)
           if tag in (EditTag.INSERT, EditTag.REPLACE)]
    out += [s for s, tag in zip(edit.src_padded, edit.tags)
            if tag is EditTag.DELETE]
    return tuple(out)


def edit_stats(corpus: Iterable[AlignedEdit]) -> EditStats:
    """Tag profile of an aligned corpus.

    An edit counts toward ``frac_only_insert`` when its non-Equal tags are
    exclusively Insert and at least one exists; likewise for Delete and
    Replace.  Mixed edits count toward none, so the fractions need not sum
    to one.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    only = {EditTag.INSERT: 0, EditTag.DELETE: 0, EditTag.REPLACE: 0}
    total_m = 0
    for edit in corpus:
        total_m += edit.m
        kinds = {tag for tag in edit.tags if tag is not EditTag.EQUAL}
        if len(kinds) == 1:
            only[next(iter(kinds))] += 1
    n = len(corpus)
    return EditStats(
        size=n,
        frac_only_insert=only[EditTag.INSERT] / n,
        frac_only_delete=only[EditTag.DELETE] / n,
        frac_only_replace=only[EditTag.REPLACE] / n,
        mean_length=total_m / n,
    )
