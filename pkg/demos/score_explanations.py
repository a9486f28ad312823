"""Score predicted explanations against reference texts with the rule-based extractor.

Builds self-consistent pairs from random attribute statuses, then corrupts a few
predictions to show how hallucinations, contradictions and omissions are counted.

Run from the repository root:  python3 demos/score_explanations.py
"""
import numpy as np

from echoexplain import nle_eval
from echoexplain.narrative import AttributeStatusSet, StatusEntry, basic_sentences, load_registry


def random_statuses(registry, rng) -> AttributeStatusSet:
    entries = {}
    for spec in registry:
        cat = list(spec.classes)[rng.integers(len(spec.classes))]
        status = spec.classes[cat].status
        value = None if status == "unspecified" else float(rng.uniform(0, 100))
        entries[spec.key] = StatusEntry(status, value, cat)
    return AttributeStatusSet(entries)


def main() -> None:
    reg = load_registry()
    rng = np.random.default_rng(3)
    pairs = []
    for i in range(8):
        text = basic_sentences(random_statuses(reg, rng), registry=reg)
        pairs.append({"id": i, "gt_text": text, "pred_text": text})

    clean = nle_eval.evaluate_pairs(pairs, reg)
    print("self-consistent pairs:")
    print(clean.to_table("copy"))

    no_bulge = "A bulge value of 500 means that there is no bulge."
    prominent = "A bulge value of 220 means that there is a prominent septal bulge."
    pairs += [
        {"id": "halluc", "gt_text": "The image quality was not assessed.", "pred_text": prominent},
        {"id": "contra", "gt_text": no_bulge, "pred_text": prominent},
        {"id": "missing", "gt_text": prominent, "pred_text": "The image quality was not assessed."},
    ]
    mixed = nle_eval.evaluate_pairs(pairs, reg)
    print("\nwith three corrupted predictions:")
    print(mixed.to_table("corrupted"))
    for row in mixed.per_sample[-3:]:
        print(f"  {row['id']}: {row}")


if __name__ == "__main__":
    main()
