#!/usr/bin/env python3
"""Writes the third-party fixture bundles used by the report tests.

The bundles imitate outputs of external topic models: plain simplex
estimates, unnormalized decoder scores, and slightly off-simplex rows as
written by float32 exporters. Usage: make_fixtures.py OUT_DIR
"""

import hashlib
import json
import math
import random
import struct
import sys
from collections import Counter
from pathlib import Path

LOW = {"A": ["a1", "a2", "a3"], "B": ["b1", "b2", "b3"]}
DOCS_PER_LABEL = 6
WORDS_PER_LABEL = 4
MODELS = {"scholar": 0.3, "dvae": 0.6, "ctm": 0.45}
KS = [3, 6]
RUNS = 4


def write_matrix(path, rows):
    n, m = len(rows), len(rows[0])
    with open(path, "wb") as f:
        f.write(b"TMRUNB01")
        f.write(struct.pack("<II", n, m))
        for r in rows:
            f.write(struct.pack("<%dd" % m, *r))


def normalize(row):
    s = sum(row)
    return [x / s for x in row]


def build_corpus(rng):
    labels = [(h, l) for h in sorted(LOW) for l in LOW[h]]
    words = {l: ["%s_w%d" % (l, i) for i in range(WORDS_PER_LABEL)] for _, l in labels}
    docs = []
    for h, l in labels:
        for j in range(DOCS_PER_LABEL):
            tokens = [rng.choice(words[l]) for _ in range(12)]
            tokens += [rng.choice(words[rng.choice(labels)[1]]) for _ in range(3)]
            docs.append({"id": "%s_%02d" % (l, j), "tokens": tokens, "label_high": h, "label_low": l})
    rng.shuffle(docs)
    counts = Counter(t for d in docs for t in d["tokens"])
    vocab = sorted(counts, key=lambda t: (-counts[t], t))
    return docs, vocab, labels


def make_run(rng, docs, vocab, labels, K, noise, model):
    # each topic covers a contiguous group of low labels
    topic_of_label = {l: i * K // len(labels) for i, (_, l) in enumerate(labels)}
    beta = []
    for k in range(K):
        row = []
        for term in vocab:
            base = 1.0 if topic_of_label[term.split("_")[0]] == k else 0.05
            row.append(base * math.exp(noise * rng.gauss(0, 1)))
        beta.append(row)
    theta = []
    for d in docs:
        k_true = topic_of_label[d["label_low"]]
        if rng.random() < noise / 2:
            k_true = rng.randrange(K)
        row = [(3.0 if k == k_true else 0.3) * math.exp(noise * rng.gauss(0, 1)) for k in range(K)]
        theta.append(normalize(row))
    if model == "dvae":
        # decoder scores: log-space, unnormalized
        beta = [[math.log(x) + 2.0 for x in row] for row in beta]
    else:
        beta = [normalize(r) for r in beta]
    if model == "ctm":
        # float32 round-off as produced by single-precision exporters
        beta = [[struct.unpack("<f", struct.pack("<f", x))[0] for x in r] for r in beta]
        theta = [[struct.unpack("<f", struct.pack("<f", x))[0] for x in r] for r in theta]
    return beta, theta


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
    rng = random.Random(20240611)
    docs, vocab, labels = build_corpus(rng)
    gold = out / "gold"
    gold.mkdir(parents=True, exist_ok=True)
    with open(gold / "corpus.jsonl", "w") as f:
        for d in docs:
            f.write(json.dumps(d) + "\n")
    vocab_text = "".join(t + "\n" for t in vocab)
    (gold / "vocab.txt").write_text(vocab_text)
    sha = hashlib.sha256(vocab_text.encode()).hexdigest()

    small = vocab[: len(vocab) // 2]
    small_sha = hashlib.sha256("".join(t + "\n" for t in small).encode()).hexdigest()

    manifest = {"allow_unnormalized": True, "stability_options": {"metric": "rbo", "p": 0.9},
                "stability": [], "alignment": [], "ensemble": []}
    for vocab_label, terms, vsha in ((str(len(vocab)), vocab, sha), (str(len(small)), small, small_sha)):
        for model, noise in MODELS.items():
            for K in KS:
                rel = "runs/%s/V%s/K%d" % (model, vocab_label, K)
                for r in range(RUNS):
                    beta, theta = make_run(rng, docs, terms, labels, K, noise, model)
                    d = out / rel / ("run_%02d" % r)
                    d.mkdir(parents=True, exist_ok=True)
                    write_matrix(d / "beta.mat", beta)
                    write_matrix(d / "theta.mat", theta)
                    meta = {"model_name": model, "dataset_id": "mini", "K": K, "V": len(terms),
                            "N": len(docs), "seed": 100 + r,
                            "hyperparams": {"lr": round(rng.uniform(1e-3, 1e-2), 5), "source": "external"},
                            "vocab_sha256": vsha}
                    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
                manifest["stability"].append({"dataset": "mini", "model": model, "V": vocab_label, "K": K,
                                              "runs": rel})
                if terms is vocab:
                    manifest["alignment"].append({"dataset": "mini", "model": model, "K": K, "runs": rel,
                                                  "gold": "gold/corpus.jsonl", "level": "low"})
                    manifest["ensemble"].append({"model": model, "runs": rel, "gold": "gold/corpus.jsonl",
                                                 "level": "low"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")

    # table layouts the report command must reproduce
    v_labels = [str(len(vocab)), str(len(small))]
    expected = {
        "stability": {
            "header": ["dataset", "model"] + ["V=%s/K=%d/%s" % (v, k, t) for v in v_labels for k in KS
                                              for t in ("Theta", "B")],
            "rows": [["mini", m] for m in MODELS],
        },
        "alignment": {
            "header": ["dataset", "model"] + ["K=%d/%s" % (k, s) for k in KS for s in ("ari", "nmi", "p1")],
            "rows": [["mini", m] for m in MODELS],
        },
        "ensemble": {
            "header": ["model", "algorithm", "distance", "lambda", "settings", "beats_worst", "beats_median",
                       "beats_best"],
            "rows": [["Overall", "kmedoids", "rbo", "1.00", str(3 * len(KS) * len(MODELS))]]
            + [[m, "kmedoids", "rbo", "1.00", str(3 * len(KS))] for m in MODELS],
        },
    }
    (out / "expected_tables.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()
