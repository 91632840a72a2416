#!/usr/bin/env python3
"""Brute-force UUAS of the left-to-right chain analysis on a CoNLL-U file.

Counts, over all sentences, the gold edges without a PUNCT endpoint and how
many of them join adjacent words. Prints `correct<TAB>scored<TAB>uuas`.
"""
import sys


def sentences(path):
    cur = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                if cur:
                    yield cur
                cur = []
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if "-" in cols[0] or "." in cols[0]:
                continue
            cur.append((int(cols[0]), cols[3], int(cols[6])))
    if cur:
        yield cur


def main():
    correct = scored = 0
    for sent in sentences(sys.argv[1]):
        upos = {i: u for i, u, _ in sent}
        for i, _, h in sent:
            if h == 0 or upos[i] == "PUNCT" or upos[h] == "PUNCT":
                continue
            scored += 1
            if abs(i - h) == 1:
                correct += 1
    print(f"{correct}\t{scored}\t{correct / scored:.12f}")


if __name__ == "__main__":
    main()
