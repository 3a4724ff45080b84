"""Generate scene-free taxonomy membership probes and check their arithmetic.

Each (hyponym, hypernym) pair in the taxonomy yields one "Is it true that a
X is a Y?" probe with gold Yes plus four negatives with the hypernym swapped
for an off-chain concept, gold No. Five questions per pair, no scene text.
"""

from collections import Counter
from pathlib import Path

from taxqa.questgen import generate_taxomps
from taxqa.taxonomy import load_taxonomy

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

taxonomy = load_taxonomy(FIXTURES / "taxonomy.txt")
pairs = taxonomy.hyponym_hypernym_pairs()
print(f"taxonomy has {len(pairs)} hyponym-hypernym pairs")

instances = generate_taxomps(taxonomy, seed=0)
questions = sum(1 + len(inst.negatives) for inst in instances)
print(f"generated {len(instances)} probes = {questions} questions "
      f"(5 x {len(instances)} = {5 * len(instances)})")
assert questions == 5 * len(instances)

# a probe per chain position: depth 1 is the nearest hypernym
by_depth = Counter(inst.substitution_depth for inst in instances)
print("probes per chain position:", dict(sorted(by_depth.items())))

print("\nthe dog probes:")
for inst in instances:
    if inst.source_leaf != "dog":
        continue
    print(f"  {inst.positive.text}  [{inst.positive.gold}]")
    for q in inst.negatives:
        print(f"    vs {q.target}: {q.text}  [{q.gold}]")

# article agreement is decided by the surface form, not hard-coded
vowel = [inst for inst in instances if inst.positive.text.count(" an ")]
print(f"\n{len(vowel)} probes use 'an'; e.g. {vowel[0].positive.text!r}")
