#!/usr/bin/env python3
"""Regenerates the bundled fixture corpora under data/fixtures.

Output is fully determined by the seeds below, so rerunning the script
leaves the committed files unchanged.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"

SEMEVAL_LABELS = ["anger", "anticipation", "disgust", "fear", "joy", "love",
                  "optimism", "pessimism", "sadness", "surprise", "trust"]

CUES = {
    "anger": ["furious", "rage", "angry", "outraged", "livid", "mad"],
    "anticipation": ["soon", "waiting", "countdown", "tomorrow", "expecting", "ready"],
    "disgust": ["gross", "vile", "disgusting", "nasty", "revolting", "sick"],
    "fear": ["scared", "terrified", "afraid", "nervous", "panic", "dread"],
    "joy": ["happy", "delighted", "glad", "smiling", "cheerful", "laughing"],
    "love": ["love", "adore", "darling", "sweetheart", "hugs", "beloved"],
    "optimism": ["hopeful", "bright", "better", "believe", "positive", "upward"],
    "pessimism": ["hopeless", "doomed", "pointless", "never", "worse", "bleak"],
    "sadness": ["sad", "crying", "heartbroken", "lonely", "tears", "miss"],
    "surprise": ["wow", "unexpected", "shocked", "suddenly", "unbelievable", "whoa"],
    "trust": ["reliable", "loyal", "faithful", "count", "honest", "depend"],
}

FILLER = ["the", "a", "today", "this", "is", "so", "my", "just", "and", "it",
          "day", "game", "work", "people", "really", "again", "what", "time"]

# Label-set templates with planted co-occurrence: surprise and trust mostly
# appear alongside joy, anger with disgust, sadness with pessimism.
TEMPLATES = [
    (["joy"], 10), (["joy", "optimism"], 8), (["joy", "love"], 6),
    (["joy", "surprise"], 5), (["joy", "trust"], 5), (["joy", "optimism", "trust"], 2),
    (["anger"], 6), (["anger", "disgust"], 9), (["disgust"], 3),
    (["sadness"], 6), (["sadness", "pessimism"], 7), (["pessimism"], 2),
    (["fear"], 5), (["fear", "sadness"], 3), (["anticipation"], 4),
    (["anticipation", "optimism"], 4), (["love"], 3), (["optimism"], 3),
    (["surprise"], 1), (["trust"], 1), ([], 2),
]


def tweet(rng, labels):
    words = []
    for label in labels:
        words += rng.sample(CUES[label], 2)
    words += rng.sample(FILLER, rng.randint(2, 5))
    rng.shuffle(words)
    if rng.random() < 0.25:
        words.insert(0, "@friend%d" % rng.randint(1, 99))
    if rng.random() < 0.2:
        words.append("https://t.co/%06x" % rng.randrange(1 << 24))
    if rng.random() < 0.2:
        words.insert(rng.randrange(len(words) + 1), str(rng.randint(2, 500)))
    if words and rng.random() < 0.3:
        k = rng.randrange(len(words))
        if words[k][0].isalpha():
            words[k] = "#" + words[k]
    text = " ".join(words)
    if rng.random() < 0.3:
        text = text.capitalize()
    return text + rng.choice(["", "!", "!!", ".", " :)"])


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for text, labels in rows:
            f.write(json.dumps({"text": text, "labels": labels}) + "\n")


def semeval_fixture():
    rng = random.Random(2018)
    pool = [labels for labels, weight in TEMPLATES for _ in range(weight)]
    rows = [(tweet(rng, labels), list(labels)) for labels in
            (rng.choice(pool) for _ in range(200))]
    out = DATA / "fixtures" / "semeval"
    write_jsonl(out / "train.jsonl", rows[:140])
    write_jsonl(out / "val.jsonl", rows[140:170])
    write_jsonl(out / "test.jsonl", rows[170:])


def overfit_fixture():
    rng = random.Random(64)
    cues = {
        "calm": ["breeze", "quiet", "still", "gentle"],
        "storm": ["thunder", "lightning", "gale", "downpour"],
        "cold": ["frost", "icy", "snow", "freezing"],
        "bright": ["sunny", "glare", "radiant", "sunshine"],
    }
    # Planted co-occurrence: storm with cold, bright with calm.
    sets = [["calm"], ["storm"], ["cold"], ["bright"], ["storm", "cold"],
            ["calm", "bright"], ["storm", "cold", "bright"], ["calm", "cold"]]
    rows = []
    for i in range(64):
        labels = sets[i % len(sets)]
        words = []
        for label in labels:
            words += rng.sample(cues[label], 2)
        words += rng.sample(["the", "weather", "now", "outside", "here"], 2)
        rng.shuffle(words)
        rows.append((" ".join(words), labels))
    write_jsonl(DATA / "fixtures" / "overfit" / "train.jsonl", rows)


def main():
    (DATA / "fixtures" / "semeval").mkdir(parents=True, exist_ok=True)
    (DATA / "fixtures" / "overfit").mkdir(parents=True, exist_ok=True)
    (DATA / "semeval_labels.txt").write_text("\n".join(SEMEVAL_LABELS) + "\n")
    (DATA / "alias_map.json").write_text(json.dumps({"happiness": "joy"}, indent=2) + "\n")
    semeval_fixture()
    overfit_fixture()


if __name__ == "__main__":
    main()
