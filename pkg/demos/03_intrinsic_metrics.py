"""Why a source-aware metric, not just BLEU.

BLEU only compares hypothesis to reference, so a system that copies its
input untouched still gets credit for everything the edit left alone. The
source-aware variant subtracts matches for n-grams the hypothesis kept
from the source even though the reference removed them, which is exactly
the failure mode of a lazy editor. No training here, just the metrics.

    python3 demos/03_intrinsic_metrics.py
"""

from editrep.metrics import bleu4, gleu

SRC = "she enjoy to reading long books in the evening".split()
REF = "she enjoys reading long books in the evening".split()

HYPS = {
    "perfect edit": REF,
    "does nothing (copies src)": SRC,
    "fixes one error of two": "she enjoys to reading long books in the evening".split(),
    "overcorrects": "she enjoys reading long books at night".split(),
}


def main() -> None:
    print(f"src: {' '.join(SRC)}")
    print(f"ref: {' '.join(REF)}\n")
    print(f"{'hypothesis':<30} {'BLEU-4':>8} {'GLEU':>8}")
    for name, hyp in HYPS.items():
        b = bleu4([hyp], [REF])
        g = gleu([SRC], [hyp], [REF])
        print(f"{name:<30} {b:8.3f} {g:8.3f}")

    print("\nThe copy hypothesis keeps 'enjoy to' from the source, a bigram "
          "the\nreference deleted, so its GLEU drops well below its BLEU.\n")

    # sanity property: with src == ref there is nothing to penalize
    b = bleu4([HYPS["overcorrects"]], [REF])
    g = gleu([REF], [HYPS["overcorrects"]], [REF])
    print(f"with src == ref the two metrics coincide: "
          f"bleu={b:.6f} gleu={g:.6f}")


if __name__ == "__main__":
    main()
