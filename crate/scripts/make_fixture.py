#!/usr/bin/env python3
"""Generate the bundled 50-sentence CoNLL-U fixture (deterministic)."""
import random
import sys

WORDS = {
    "NOUN": ["dog", "house", "river", "teacher", "book", "city", "idea", "market"],
    "VERB": ["sees", "builds", "reads", "finds", "likes", "opens", "writes"],
    "ADJ": ["red", "old", "quiet", "large", "bright", "strange"],
    "DET": ["the", "a", "this", "every"],
    "ADP": ["in", "on", "near", "under", "with"],
    "ADV": ["quickly", "often", "never", "there"],
    "PRON": ["she", "they", "it", "we"],
    "PUNCT": [",", ";", "-"],
}
REL = {
    "ADJ": "amod", "DET": "det", "ADP": "case", "ADV": "advmod",
    "PRON": "nsubj", "VERB": "ccomp", "PUNCT": "punct",
}
NOUN_RELS = ["nsubj", "obj", "nmod", "obl:tmod", "nsubj:pass"]


def random_tree(n, rng):
    heads = [0] * n
    order = list(range(n))
    rng.shuffle(order)
    root = order[0]
    placed = [root]
    for v in order[1:]:
        heads[v] = rng.choice(placed) + 1
        placed.append(v)
    return heads


def sentence(idx, rng):
    n = rng.randint(3, 18)
    heads = random_tree(n, rng)
    rows = []
    for i in range(n):
        if heads[i] == 0:
            upos, rel = "VERB", "root"
        else:
            upos = rng.choice(list(WORDS))
            rel = REL.get(upos) or rng.choice(NOUN_RELS)
        rows.append([str(i + 1), rng.choice(WORDS[upos]), "_", upos, "_", "_",
                     str(heads[i]), rel, "_", "_"])
    lines = [f"# sent_id = fx-{idx:02d}", f"# text = {' '.join(r[1] for r in rows)}"]
    if idx % 7 == 3 and n >= 2:
        lines.append(f"1-2\t{rows[0][1]}{rows[1][1]}\t_\t_\t_\t_\t_\t_\t_\t_")
    for i, r in enumerate(rows):
        lines.append("\t".join(r))
        if idx % 11 == 5 and i == 0:
            lines.append("1.1\tgap\t_\tX\t_\t_\t_\t_\t1:dep\t_")
    return "\n".join(lines) + "\n\n"


def main():
    rng = random.Random(20200501)
    out = sys.argv[1] if len(sys.argv) > 1 else "fixtures/fixture50.conllu"
    with open(out, "w", encoding="utf-8") as f:
        for i in range(50):
            f.write(sentence(i, rng))


if __name__ == "__main__":
    main()
