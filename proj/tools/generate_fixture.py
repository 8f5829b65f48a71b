#!/usr/bin/env python3
"""Generates the bundled synthetic fixture under data/fixture/.

Twenty users fall into four taste groups of five. Every user reviews every one
of ten POIs (200 reviews). A group's star ratings follow its own +/- pattern
over the POIs, and its reviews only use that group's opinion/aspect words,
positive opinions for ratings >= 3 and negative ones otherwise. Word vectors
place each group's opinions and aspects along their own axes, so pairs match
within a group and not across groups.

Usage: generate_fixture.py [output_dir]
"""

import json
import random
import sys
from datetime import date, timedelta
from pathlib import Path

SEED = 1729
DIM = 10

GROUPS = [
    {
        "pos": ["great", "delicious", "tasty", "scrumptious"],
        "neg": ["bland", "soggy"],
        "aspects": ["pizza", "pasta", "burger"],
        "pattern": [+1, +1, +1, +1, +1, -1, -1, -1, -1, -1],
    },
    {
        "pos": ["cheap", "affordable", "reasonable"],
        "neg": ["overpriced", "pricey"],
        "aspects": ["beer", "wine", "cocktail"],
        "pattern": [-1, -1, -1, -1, -1, +1, +1, +1, +1, +1],
    },
    {
        "pos": ["friendly", "attentive", "helpful"],
        "neg": ["rude", "slow"],
        "aspects": ["staff", "waiter", "server"],
        "pattern": [+1, -1, +1, -1, +1, -1, +1, -1, +1, -1],
    },
    {
        "pos": ["cozy", "quiet", "charming"],
        "neg": ["noisy", "cramped"],
        "aspects": ["atmosphere", "decor", "patio"],
        "pattern": [-1, +1, -1, +1, -1, +1, -1, +1, -1, +1],
    },
]

# Present in the lexicon but deliberately absent from the vectors.
OOV = {"scrumptious"}

FILLER = ["we", "have", "a", "the", "be", "and", "service", "food", "place", "really", "."]

USERS_PER_GROUP = 5
NUM_POIS = 10
START = date(2017, 1, 1)
SPAN_DAYS = (date(2018, 6, 30) - START).days


def word_vectors(rng):
    vecs = {}
    for g, group in enumerate(GROUPS):
        for w in group["pos"] + group["neg"]:
            v = [rng.gauss(0, 0.12) for _ in range(DIM)]
            v[g] += 1.0
            vecs[w] = v
        for w in group["aspects"]:
            v = [rng.gauss(0, 0.12) for _ in range(DIM)]
            v[4 + g] += 1.0
            vecs[w] = v
    for w in FILLER:
        v = [rng.gauss(0, 0.12) for _ in range(DIM)]
        v[8 + rng.randrange(2)] += 1.0
        vecs[w] = v
    return {w: v for w, v in vecs.items() if w not in OOV}


def amod_sentence(adjs, noun):
    """`We have a ADJ.. NOUN .` with full dependency annotation."""
    noun_idx = 4 + len(adjs)
    toks = [("We", "we", "PRON", 2, "nsubj"), ("have", "have", "VERB", 0, "root"),
            ("a", "a", "DET", noun_idx, "det")]
    for a in adjs:
        toks.append((a, a, "ADJ", noun_idx, "amod"))
    toks.append((noun, noun, "NOUN", 2, "obj"))
    toks.append((".", ".", "PUNCT", 2, "punct"))
    return toks


def predicative_sentence(adj):
    """`The food be ADJ .` carries no amod relation and yields no pair."""
    return [("The", "the", "DET", 2, "det"), ("food", "food", "NOUN", 4, "nsubj"),
            ("was", "be", "AUX", 4, "cop"), (adj, adj, "ADJ", 0, "root"),
            (".", ".", "PUNCT", 4, "punct")]


def write_sentence(out, toks, annotated):
    for k, (form, lemma, upos, head, rel) in enumerate(toks, start=1):
        if annotated:
            out.append(f"{k}\t{form}\t{lemma}\t{upos}\t{head}\t{rel}")
        else:
            out.append(f"{k}\t{form}\t{lemma}\t{upos}\t_\t_")
    out.append("")


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "fixture"
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)

    reviews = []
    conll = ["# synthetic fixture, generated by tools/generate_fixture.py", ""]
    rid = 0
    for g, group in enumerate(GROUPS):
        for m in range(USERS_PER_GROUP):
            user = f"u{g * USERS_PER_GROUP + m:02d}"
            for poi in range(NUM_POIS):
                stars = round(3 + 1.5 * group["pattern"][poi] + rng.gauss(0, 0.5))
                stars = max(1, min(5, stars))
                day = START + timedelta(days=rng.randrange(SPAN_DAYS + 1))
                review_id = f"r{rid:03d}"
                rid += 1
                reviews.append({"review_id": review_id, "user_id": user,
                                "business_id": f"p{poi:02d}", "stars": stars,
                                "date": day.isoformat()})
                words = group["pos"] if stars >= 3 else group["neg"]
                annotated = rng.random() >= 0.25
                conll.append(f"# review_id = {review_id}")
                for _ in range(rng.randint(1, 3)):
                    noun = rng.choice(group["aspects"])
                    if rng.random() < 0.2:
                        adjs = rng.sample(words, 2)
                    else:
                        adjs = [rng.choice(words)]
                    write_sentence(conll, amod_sentence(adjs, noun), annotated)
                if rng.random() < 0.3:
                    write_sentence(conll, predicative_sentence(rng.choice(words)), annotated)

    with open(out_dir / "reviews.jsonl", "w") as f:
        for r in reviews:
            f.write(json.dumps(r) + "\n")
    with open(out_dir / "annotated.conll", "w") as f:
        f.write("\n".join(conll) + "\n")

    vecs = word_vectors(rng)
    with open(out_dir / "vectors.txt", "w") as f:
        for w in sorted(vecs):
            f.write(w + " " + " ".join(f"{x:.6f}" for x in vecs[w]) + "\n")

    with open(out_dir / "lexicon.tsv", "w") as f:
        f.write("# SentiWordNet-style lexicon for the synthetic fixture\n")
        f.write("# POS\tID\tPosScore\tNegScore\tSynsetTerms\tGloss\n")
        sid = 1000
        for group in GROUPS:
            for w in group["pos"]:
                f.write(f"a\t{sid:08d}\t0.625\t0\t{w}#1\tpositive sense of {w}\n")
                sid += 1
            for w in group["neg"]:
                f.write(f"a\t{sid:08d}\t0\t0.625\t{w}#1\tnegative sense of {w}\n")
                sid += 1
                # a second, weaker sense keeps the mean negative
                f.write(f"a\t{sid:08d}\t0.125\t0.25\t{w}#2\tmilder sense of {w}\n")
                sid += 1
        for w in ["pizza", "beer", "staff", "atmosphere"]:
            f.write(f"n\t{sid:08d}\t0.5\t0\t{w}#1\tnoun rows are ignored\n")
            sid += 1

    config = {
        "paths": {
            "reviews": "reviews.jsonl",
            "annotated": "annotated.conll",
            "vectors": "vectors.txt",
            "lexicon": "lexicon.tsv",
            "output_dir": "out",
        },
        "reviews_format": "jsonl",
        "cutoff": "2018-01-01",
        "seed": 7,
        "threshold": 0.8,
        "k_users": 3,
        "folds": 10,
        "vector_dim": DIM,
        "min_pair_freq": 20,
        "amod_labels": ["amod"],
        "lexicon_pos_classes": ["a"],
        "frequency_weighted_sampling": False,
        "models": {
            "ncf": {"latent_dim": 8, "epochs": 200, "learning_rate": 0.02, "l2_reg": 0.01,
                    "batch_size": 8, "hidden_units": 8},
            "svd": {"latent_dim": 8, "epochs": 200, "learning_rate": 0.02, "l2_reg": 0.02,
                    "batch_size": 8},
            "nmf": {"latent_dim": 4, "epochs": 100, "l2_reg": 0.0},
            "knn": {"knn_k": 5, "knn_min_overlap": 2},
        },
    }
    with open(out_dir / "config.json", "w") as f:
        json.dump(config, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
