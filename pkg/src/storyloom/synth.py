"""Deterministic synthetic corpus for desk-scale training and tests.

Stories are five-sentence templates filled from per-theme word families
(nouns plus theme-specific verbs and adjectives), so the corpus has strong
positional and topical structure: recurrent models beat unigram baselines
by a wide margin, keyword extraction finds contentful phrases, and
swapped-context negatives are separable for the relevance scorer.
Regenerate the bundled file with:

    python3 -m storyloom.synth --out src/storyloom/data/synthetic_corpus.tsv
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .text import StoryRecord, save_corpus, tokenize

# theme -> (eight nouns, three verbs, three adjectives)
THEMES: dict[str, tuple[list[str], list[str], list[str]]] = {
    "ocean": (
        ["sailor", "boat", "wave", "shore", "fish", "storm", "island", "harbor"],
        ["sailed", "anchored", "rowed"],
        ["salty", "tidal", "foamy"],
    ),
    "forest": (
        ["ranger", "trail", "deer", "cabin", "maple", "fern", "creek", "owl"],
        ["hiked", "tracked", "camped"],
        ["mossy", "shaded", "piney"],
    ),
    "bakery": (
        ["baker", "oven", "loaf", "flour", "icing", "crust", "tray", "sugar"],
        ["kneaded", "baked", "frosted"],
        ["floury", "glazed", "crusty"],
    ),
    "garden": (
        ["gardener", "rose", "soil", "trowel", "hedge", "tulip", "vine", "pond"],
        ["planted", "pruned", "watered"],
        ["leafy", "blooming", "weedy"],
    ),
    "circus": (
        ["clown", "tent", "juggler", "trapeze", "lion", "ringmaster", "parade", "drum"],
        ["juggled", "tumbled", "performed"],
        ["striped", "festive", "daring"],
    ),
    "library": (
        ["librarian", "shelf", "novel", "ladder", "lamp", "atlas", "page", "desk"],
        ["catalogued", "shelved", "skimmed"],
        ["hushed", "dusty", "leather"],
    ),
    "mountain": (
        ["climber", "summit", "rope", "glacier", "ridge", "valley", "camp", "eagle"],
        ["climbed", "belayed", "scaled"],
        ["icy", "steep", "windswept"],
    ),
    "kitchen": (
        ["cook", "kettle", "spoon", "stew", "pepper", "skillet", "onion", "broth"],
        ["simmered", "stirred", "seasoned"],
        ["savory", "steaming", "peppery"],
    ),
    "harvest": (
        ["farmer", "tractor", "barn", "wheat", "orchard", "apple", "fence", "crow"],
        ["plowed", "harvested", "threshed"],
        ["ripe", "golden", "rustic"],
    ),
    "river": (
        ["fisher", "canoe", "current", "reed", "trout", "bridge", "bank", "heron"],
        ["paddled", "casted", "waded"],
        ["rippling", "muddy", "swift"],
    ),
    "desert": (
        ["nomad", "dune", "camel", "oasis", "cactus", "scorpion", "canyon", "mirage"],
        ["wandered", "trekked", "rationed"],
        ["arid", "scorched", "sandy"],
    ),
    "winter": (
        ["skater", "sled", "icicle", "mitten", "snowman", "frost", "hearth", "lantern"],
        ["skated", "shoveled", "shivered"],
        ["frozen", "snowy", "brisk"],
    ),
    "music": (
        ["fiddler", "stage", "violin", "chorus", "melody", "encore", "bow", "hall"],
        ["rehearsed", "strummed", "conducted"],
        ["tuneful", "ringing", "lively"],
    ),
    "train": (
        ["conductor", "engine", "whistle", "track", "tunnel", "wagon", "platform", "signal"],
        ["coupled", "stoked", "departed"],
        ["punctual", "rattling", "steamy"],
    ),
    "market": (
        ["vendor", "stall", "basket", "coin", "ribbon", "crate", "scale", "awning"],
        ["bartered", "haggled", "peddled"],
        ["bustling", "crowded", "cheap"],
    ),
    "castle": (
        ["knight", "tower", "moat", "banner", "gate", "armor", "throne", "courtyard"],
        ["jousted", "guarded", "besieged"],
        ["royal", "stony", "fortified"],
    ),
    "workshop": (
        ["carpenter", "plank", "chisel", "bench", "varnish", "hinge", "mallet", "sawdust"],
        ["sanded", "carved", "hammered"],
        ["wooden", "sturdy", "unfinished"],
    ),
    "meadow": (
        ["shepherd", "flock", "clover", "brook", "bee", "daisy", "haystack", "pasture"],
        ["grazed", "herded", "mowed"],
        ["grassy", "sunny", "buzzing"],
    ),
    "city": (
        ["painter", "mural", "alley", "rooftop", "subway", "plaza", "pigeon", "streetlight"],
        ["sketched", "commuted", "strolled"],
        ["urban", "noisy", "neon"],
    ),
    "space": (
        ["astronaut", "rocket", "comet", "orbit", "capsule", "module", "crater", "antenna"],
        ["launched", "docked", "floated"],
        ["weightless", "stellar", "lunar"],
    ),
    "school": (
        ["teacher", "chalk", "notebook", "recess", "globe", "ruler", "backpack", "bell"],
        ["graded", "recited", "quizzed"],
        ["studious", "noisy", "tidy"],
    ),
    "theater": (
        ["actor", "curtain", "script", "spotlight", "balcony", "costume", "makeup", "usher"],
        ["auditioned", "bowed", "improvised"],
        ["dramatic", "velvet", "dimmed"],
    ),
    "mine": (
        ["miner", "lantern", "shaft", "pickaxe", "vein", "cart", "helmet", "gem"],
        ["tunneled", "drilled", "prospected"],
        ["deep", "glittering", "sooty"],
    ),
    "hospital": (
        ["nurse", "chart", "bandage", "ward", "gurney", "thermometer", "syrup", "blanket"],
        ["bandaged", "soothed", "monitored"],
        ["sterile", "gentle", "calm"],
    ),
    "vineyard": (
        ["grower", "grape", "barrel", "cellar", "cork", "press", "slope", "cask"],
        ["crushed", "bottled", "tasted"],
        ["vintage", "sunlit", "fragrant"],
    ),
    "airfield": (
        ["pilot", "hangar", "propeller", "runway", "compass", "fuselage", "beacon", "glider"],
        ["taxied", "soared", "landed"],
        ["turbulent", "aerial", "breezy"],
    ),
    "zoo": (
        ["keeper", "giraffe", "enclosure", "penguin", "feeding", "otter", "paddock", "tortoise"],
        ["fed", "groomed", "weighed"],
        ["playful", "spotted", "sleepy"],
    ),
    "lighthouse": (
        ["watcher", "lens", "cliff", "fog", "gull", "stairwell", "railing", "flare"],
        ["signaled", "polished", "scanned"],
        ["misty", "flashing", "lonely"],
    ),
    "museum": (
        ["curator", "fossil", "exhibit", "statue", "mosaic", "vault", "plaque", "relic"],
        ["restored", "displayed", "archived"],
        ["ancient", "marble", "priceless"],
    ),
    "ranch": (
        ["cowboy", "saddle", "lasso", "corral", "mustang", "spur", "bunkhouse", "cattle"],
        ["roped", "branded", "galloped"],
        ["dusty", "wild", "leathery"],
    ),
}

# Templates within one position share a single glue-token multiset and vary
# only in ordering and slot placement: mean pooling then sees theme words,
# not template choice, while the sequence model still gets order diversity.
_OPENERS = [
    "the {a0} {w0} kept the {a1} {w1} near the {w2} .",
    "near the {w2} the {a0} {w0} kept the {a1} {w1} .",
    "the {a1} {w1} near the {w2} kept the {a0} {w0} .",
]
_SECOND = [
    "one day the {w0} {v0} to the {a0} {w2} .",
    "the {w0} {v0} to the {a0} {w2} one day .",
    "one day the {a0} {w0} {v0} to the {w2} .",
]
_THIRD = [
    "the {w0} found the {a1} {w3} beside the {w1} .",
    "beside the {w1} the {w0} found the {a1} {w3} .",
    "the {a1} {w0} found the {w3} beside the {w1} .",
]
_FOURTH = [
    "then the {w0} {v1} the {w3} and the {w1} .",
    "then the {w0} {v1} the {w1} and the {w3} .",
    "the {w0} then {v1} the {w3} and the {w1} .",
]
_CLOSERS = [
    "at last the {w0} brought the {a0} {w3} back to the {w1} .",
    "at last the {w0} brought the {a0} {w1} back to the {w3} .",
    "the {w0} brought the {a0} {w3} back to the {w1} at last .",
]

_TEMPLATES = [_OPENERS, _SECOND, _THIRD, _FOURTH, _CLOSERS]


def generate_corpus(n_stories: int = 600, seed: int = 7) -> list[StoryRecord]:
    rng = np.random.default_rng(seed)
    theme_names = list(THEMES)
    records = []
    for k in range(n_stories):
        theme = theme_names[k % len(theme_names)]
        nouns, verbs, adjectives = THEMES[theme]
        slots = {
            "w0": nouns[int(rng.integers(0, 2))],
            "w1": nouns[int(rng.integers(2, 4))],
            "w2": nouns[int(rng.integers(4, 6))],
            "w3": nouns[int(rng.integers(6, 8))],
            "v0": verbs[int(rng.integers(0, 3))],
            "v1": verbs[int(rng.integers(0, 3))],
            "v2": verbs[int(rng.integers(0, 3))],
            "a0": adjectives[int(rng.integers(0, 3))],
            "a1": adjectives[int(rng.integers(0, 3))],
        }
        title = f"the {slots['a0']} {slots['w0']}"
        sentences = []
        for position in range(5):
            options = _TEMPLATES[position]
            template = options[int(rng.integers(0, len(options)))]
            sentences.append(tuple(tokenize(template.format(**slots))))
        records.append(StoryRecord(title=tuple(tokenize(title)), sentences=tuple(sentences)))
    return records


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="generate the synthetic training corpus")
    parser.add_argument("--out", required=True)
    parser.add_argument("--stories", type=int, default=600)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    records = generate_corpus(args.stories, args.seed)
    save_corpus(records, Path(args.out))
    print(f"wrote {len(records)} stories to {args.out}")


if __name__ == "__main__":
    main()
