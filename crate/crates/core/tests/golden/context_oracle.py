"""Reference context-block formatter used to produce context_block*.txt.

Usage: python3 context_oracle.py
"""
import json
import os

HEADER = "[HPC Knowledge Base, Retrieved Context]"


def block(hits, cap):
    lines = [(HEADER, True)]
    for i, h in enumerate(hits, 1):
        lines.append(("[Source %d: %s | relevance %.2f]" % (i, h["url"], h["score"]), True))
        lines.extend((t, False) for t in h["text"].split("\n"))
    kept = []
    for text, is_header in lines:
        candidate = "\n".join([k for k, _ in kept] + [text])
        if len(candidate) <= cap:
            kept.append((text, is_header))
            continue
        if not is_header:
            room = cap - len("\n".join([k for k, _ in kept] + [""]))
            if room > 0:
                kept.append((text[:room], False))
        break
    if len(kept) > 1 and kept[-1][1]:
        kept.pop()
    return "\n".join(k for k, _ in kept)


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    hits = json.load(open(os.path.join(here, "context_hits.json")))
    for cap, name in [(3000, "context_block.txt"), (200, "context_block_200.txt"), (248, "context_block_248.txt"), (100000, "context_block_full.txt")]:
        with open(os.path.join(here, name), "w") as f:
            f.write(block(hits, cap))
