"""Probe what an edit encoder actually captures.

Trains the deterministic sequence encoder briefly (it needs no KL
schedule, so it is the cheapest variant), freezes it, maps every edit to
its vector, and fits probe classifiers of increasing depth that predict
the rule class of the edit from the vector alone. If a depth-0 (linear)
probe already scores well, the classes are linearly separated in edit
space; depth only helps when the structure is nonlinear.

    python3 demos/04_probe_depth_sweep.py
"""

from editrep.corpus import build_vocab, gen_synthetic, split
from editrep.model import EditModel, ModelConfig
from editrep.probe import (ProbeConfig, ProbeSplit, depth_sweep,
                           extract_representations)
from editrep.training import TrainConfig, train


def main() -> None:
    examples = gen_synthetic(900, seed=13)
    train_ex, valid_ex, test_ex = split(examples, (0.7, 0.15, 0.15), seed=13)
    sv = build_vocab(train_ex, "source")
    tv = build_vocab(train_ex, "target")

    model = EditModel(
        ModelConfig(src_vocab_size=len(sv), tgt_vocab_size=len(tv),
                    d_emb=16, d_h=24, d_z=8, variant="YIN"),
        sv, tv, seed=0)
    train(model, train_ex, valid_ex,
          TrainConfig(seed=0, batch_size=32, two_stage=False, anneal=False,
                      stage_b_epochs=6, patience=2),
          log=print)

    def as_split(exs):
        reps = extract_representations(model, exs)
        labels = [sorted(e.labels)[0] for e in exs]
        return ProbeSplit(reps, labels)

    print("\nextracting edit vectors and sweeping probe depth 0/1/2 ...")
    best = depth_sweep(as_split(train_ex), as_split(valid_ex), as_split(test_ex),
                       depths=[0, 1, 2],
                       config=ProbeConfig(width=32, epochs=30, lr=5e-3,
                                          seed=0, patience=4, batch_size=64))

    print(f"\n{'depth':>5} {'valid acc':>10} {'test acc':>9}")
    for point in best.curve:
        marker = " <- selected" if point["depth"] == best.depth else ""
        print(f"{point['depth']:>5} {point['valid_accuracy']:>10.3f} "
              f"{point['test_accuracy']:>9.3f}{marker}")
    print(f"\nchance is 1/{len(best.label_set)} = "
          f"{1 / len(best.label_set):.2f} over labels {best.label_set}")


if __name__ == "__main__":
    main()
