#!/usr/bin/env python3
"""Regenerates the JSON/JSONL/vocabulary fixtures under fixtures/.

Output is deterministic (fixed random seed); rerun after editing word lists.
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

PAIRS = [
    ("for", "against"), ("pro", "con"), ("support", "oppose"), ("agree", "disagree"),
    ("favor", "against"), ("endorse", "deny"), ("affirm", "refute"), ("accept", "reject"),
    ("approve", "disapprove"), ("validate", "refute"), ("confirm", "dispute"),
    ("back", "oppose"), ("champion", "oppose"), ("advocate", "criticize"), ("yes", "no"),
    ("positive", "negative"), ("supportive", "opposed"), ("favorable", "unfavorable"),
    ("uphold", "undermine"), ("support", "undermine"), ("agree", "refute"),
    ("endorse", "reject"), ("affirm", "deny"), ("accept", "deny"), ("support", "deny"),
    ("favour", "against"), ("proponent", "opponent"), ("assent", "dissent"),
    ("like", "dislike"), ("embrace", "reject"), ("approve", "reject"),
    # removed by the manual filter
    ("bolster", "sabotage"),
]
BLOCKED = ["sabotage"]


def uniq(xs):
    out = []
    for x in xs:
        if x not in out:
            out.append(x)
    return out


def lexicon(pos, neg, extra):
    syn = {pos: uniq(p for p, _ in PAIRS), neg: uniq(n for _, n in PAIRS)}
    syn.update(extra)
    return {
        "synonyms": syn,
        "antonym_pairs": [list(p) for p in PAIRS],
        "blocked": BLOCKED,
    }


def dump(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def dump_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


TOPICS = ["abortion", "gun control", "gay rights", "marijuana", "the president",
          "climate policy", "school uniforms", "nuclear power", "free trade", "vaccines"]
OPENERS = ["I think", "Honestly", "Frankly", "In my view", "Clearly", "Nobody can deny that",
           "It seems", "Look,", "Let us be real:", "Everyone knows"]
VERBS = ["is good for", "is bad for", "helps", "hurts", "matters to", "divides",
         "protects", "threatens", "changes", "costs"]
OBJECTS = ["families", "the economy", "young people", "our freedom", "the country",
           "public health", "workers", "the future", "local schools", "everyone"]
CLAIMS = ["A city bans cars downtown", "A new planet was found", "A celebrity quits acting",
          "Coffee cures headaches", "A bank shuts all branches", "A robot wins a chess cup",
          "A river turns pink", "Schools adopt four day weeks", "A shark is seen in a lake",
          "A phone battery lasts a month"]


def sentence(rng, topic):
    return f"{rng.choice(OPENERS)} {topic} {rng.choice(VERBS)} {rng.choice(OBJECTS)}"


def make_scd(rng):
    schema = {
        "task_name": "scd",
        "class_roles": ["for", "against"],
        "original_labels": {"for": "for", "against": "against"},
        "text1_name": "topic",
        "text2_name": "post",
    }
    rows = []
    for i in range(200):
        topic = rng.choice(TOPICS)
        rows.append({"id": f"scd-{i:04d}", "text1": topic, "text2": sentence(rng, topic),
                     "label": rng.choice(["for", "against"])})
    dump(ROOT / "scd" / "schema.json", schema)
    dump(ROOT / "scd" / "lexicon.json", lexicon("for", "against", {}))
    dump_jsonl(ROOT / "scd" / "validation.jsonl", rows)


def make_emergent(rng):
    schema = {
        "task_name": "emergent",
        "class_roles": ["for", "against", "observing"],
        "original_labels": {"for": "for", "against": "against", "observing": "observing"},
        "text1_name": "claim",
        "text2_name": "headline",
    }
    rows = []
    for i in range(60):
        claim = rng.choice(CLAIMS)
        rows.append({"id": f"em-{i:04d}", "text1": claim,
                     "text2": f"{rng.choice(OPENERS)} {claim.lower()}",
                     "label": rng.choice(schema["class_roles"])})
    elab = {
        "E1": {"for": "{word} with the claim", "against": "{word} with the claim",
               "observing": "{word} on the claim"},
        "E2": {"for": "{word} with the claim in the headline",
               "against": "{word} with the claim in the headline",
               "observing": "{word} on the claim in the headline"},
        "E3": {"for": "the headline would {word} with the claim as stated",
               "against": "the headline would {word} with the claim as stated",
               "observing": "the headline stays {word} on the claim as stated"},
    }
    dump(ROOT / "emergent" / "schema.json", schema)
    dump(ROOT / "emergent" / "lexicon.json",
         lexicon("for", "against", {"observing": ["observing", "neutral"]}))
    dump(ROOT / "emergent" / "elaborations.json", elab)
    dump_jsonl(ROOT / "emergent" / "validation.jsonl", rows)


def make_rumoureval(rng):
    roles = ["support", "deny", "query", "comment"]
    schema = {
        "task_name": "rumoureval",
        "class_roles": roles,
        "original_labels": {r: r for r in roles},
        "text1_name": "source",
        "text2_name": "reply",
    }
    rows = []
    for i in range(40):
        claim = rng.choice(CLAIMS)
        rows.append({"id": f"ru-{i:04d}", "text1": claim,
                     "text2": f"{rng.choice(OPENERS)} {claim.lower()}",
                     "label": rng.choice(roles)})
    dump(ROOT / "rumoureval" / "schema.json", schema)
    dump(ROOT / "rumoureval" / "lexicon.json",
         lexicon("support", "deny", {"query": ["query", "question", "inquire", "ask"],
                                      "comment": ["comment", "neutral"]}))
    dump(ROOT / "rumoureval" / "wf2_weights.json",
         {"support": 0.40, "deny": 0.40, "query": 0.15, "comment": 0.05})
    dump_jsonl(ROOT / "rumoureval" / "validation.jsonl", rows)


def make_synthetic(rng):
    schema = {
        "task_name": "synthetic",
        "class_roles": ["for", "against"],
        "original_labels": {"for": "for", "against": "against"},
        "text1_name": "claim",
        "text2_name": "statement",
    }
    rows = []
    for i in range(1000):
        topic = rng.choice(TOPICS)
        rows.append({"id": f"syn-{i:04d}", "text1": topic,
                     "text2": f"statement {i:04d} on {topic}",
                     "label": rng.choice(["for", "against"])})
    # tail level rises and accuracy falls along this (shuffled) order
    sets = [list(p) for p in PAIRS if p[1] not in BLOCKED]
    order = list(range(len(sets)))
    rng.shuffle(order)
    profile_sets = []
    for rank, idx in enumerate(order):
        profile_sets.append({
            "words": sets[idx],
            "tail": round(3.0 + 0.5 * rank, 3),
            "accuracy": round(0.95 - 0.02 * rank, 3),
        })
    profile = {"seed": 20240611, "d_ff": 256, "outliers": 4, "sets": profile_sets}
    dump(ROOT / "synthetic" / "schema.json", schema)
    dump(ROOT / "synthetic" / "profile.json", profile)
    dump_jsonl(ROOT / "synthetic" / "validation.jsonl", rows)


def make_templates():
    default = {
        "body": "Given a {text1_name} and a {text2_name}, detect the stance that the "
                "{text2_name} has towards the {text1_name}. There are {n} options: {options}. "
                "Now complete the following example. {text1_name}: {text1}. {text2_name}: {text2}",
        "options_style": "quoted_and",
    }
    alt = {
        "body": "What is the stance of {text2_name} towards {text1_name}? There are {n} "
                "options: {options}. {text1_name}: {text1}. {text2_name}: {text2}",
        "options_style": "quoted_and",
    }
    open_t = {
        "body": "Given a {text1_name} and a {text2_name}, detect the stance that the "
                "{text2_name} has towards the {text1_name}. "
                "Now complete the following example. {text1_name}: {text1}. {text2_name}: {text2}",
        "options_style": "none",
    }
    dump(ROOT / "templates" / "default.json", default)
    dump(ROOT / "templates" / "alternative.json", alt)
    dump(ROOT / "templates" / "open.json", open_t)
    return [default["body"], alt["body"], open_t["body"]]


def make_vocab(texts):
    words = set()
    for t in texts:
        for w in t.replace('"', " ").replace(".", " ").replace(",", " ").replace(":", " ") \
                .replace("?", " ").replace("{", " ").replace("}", " ").split():
            words.add(w)
    tokens = []
    for i in range(32, 127):
        tokens.append(chr(i))
    for w in sorted(words):
        for form in (w, " " + w, w.capitalize(), " " + w.capitalize()):
            if form not in tokens:
                tokens.append(form)
    for extra in ['"', '", ', ". ", ": ", ", ", '"\n', "\n"]:
        if extra not in tokens:
            tokens.append(extra)
    lines = ["<unk>\t0", "<eos>\t1"]
    for b in range(256):
        lines.append(f"<0x{b:02X}>\t{b + 2}")
    next_id = 258
    for tok in tokens:
        esc = tok.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")
        lines.append(f"{esc}\t{next_id}")
        next_id += 1
    (ROOT / "vocab.txt").write_text("\n".join(lines) + "\n")


def main():
    rng = random.Random(1234)
    make_scd(rng)
    make_emergent(rng)
    make_rumoureval(rng)
    make_synthetic(rng)
    bodies = make_templates()
    texts = list(bodies)
    for name in ("scd", "emergent", "rumoureval"):
        for line in (ROOT / name / "validation.jsonl").read_text().splitlines():
            row = json.loads(line)
            texts += [row["text1"], row["text2"]]
        lex = json.loads((ROOT / name / "lexicon.json").read_text())
        for words in lex["synonyms"].values():
            texts += words
    elab = json.loads((ROOT / "emergent" / "elaborations.json").read_text())
    texts += [t for level in elab.values() for t in level.values()]
    texts += TOPICS + ["statement on"]
    # placeholder names that appear inside prompts
    texts += ["topic post claim headline source reply statement neither none"]
    make_vocab(texts)


if __name__ == "__main__":
    main()
