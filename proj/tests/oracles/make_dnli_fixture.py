#!/usr/bin/env python3
"""Writes tests/data/dnli_fixture.jsonl: 120 neutral, 100 negative and 140
positive DNLI-style pairs. Run once; the output is checked in."""
import json
import random
import sys

rng = random.Random(20240611)

foods = ["pizza", "sushi", "tacos", "pasta", "curry", "salad", "burgers", "noodles", "pancakes", "dumplings",
         "steak", "soup", "waffles", "bagels", "ramen", "falafel", "lasagna", "burritos", "oysters", "kimchi"]
pets = ["dog", "cat", "parrot", "hamster", "rabbit", "turtle", "goldfish", "lizard", "snake", "horse"]
jobs = ["teacher", "nurse", "lawyer", "chef", "pilot", "plumber", "farmer", "dentist", "painter", "baker",
        "engineer", "librarian", "firefighter", "mechanic", "journalist"]
cities = ["paris", "tokyo", "chicago", "boston", "denver", "madrid", "berlin", "seattle", "dallas", "toronto",
          "sydney", "miami", "dublin", "oslo", "lisbon"]
hobbies = ["hiking", "swimming", "fishing", "knitting", "gardening", "chess", "surfing", "painting", "cycling",
           "yoga", "baking", "dancing", "camping", "skiing", "running"]
colors = ["blue", "green", "red", "purple", "yellow", "orange", "black", "white", "pink", "teal"]
numbers = ["two", "three", "four", "five"]


def persona(kind, x):
    return {
        "food": f"i love eating {x} .",
        "pet": f"i have a {x} .",
        "job": f"i work as a {x} .",
        "city": f"i live in {x} .",
        "hobby": f"i enjoy {x} on weekends .",
        "color": f"my favorite color is {x} .",
    }[kind]


pools = {"food": foods, "pet": pets, "job": jobs, "city": cities, "hobby": hobbies, "color": colors}
kinds = list(pools)

records = []

# neutral: two unrelated persona facts
for _ in range(120):
    k1, k2 = rng.sample(kinds, 2)
    records.append((persona(k1, rng.choice(pools[k1])), persona(k2, rng.choice(pools[k2])), "neutral"))

# negative: contradictions
for i in range(100):
    form = i % 4
    if form == 0:
        p = rng.choice(pets)
        records.append((f"i have a {p} .", f"i do not have a {p} .", "negative"))
    elif form == 1:
        f = rng.choice(foods)
        records.append((f"i love eating {f} .", f"i hate eating {f} .", "negative"))
    elif form == 2:
        a, b = rng.sample(cities, 2)
        records.append((f"i live in {a} .", f"i live in {b} .", "negative"))
    else:
        j = rng.choice(jobs)
        records.append((f"i work as a {j} .", f"i am unemployed .", "negative"))

# positive: s1 entails s2, s2 entails s1, almost identical, and a few that
# only the size fallback decides
for i in range(140):
    form = i % 7
    if form in (0, 1):
        a, b = rng.sample(hobbies, 2)
        records.append((f"i enjoy {a} and {b} .", f"i enjoy {a} .", "positive"))
    elif form == 2:
        n, p = rng.choice(numbers), rng.choice(pets)
        records.append((f"i have {n} {p}s and a cat .", "i have a cat .", "positive"))
    elif form == 3:
        a, b = rng.sample(foods, 2)
        records.append((f"i love eating {a} .", f"i love eating {a} and {b} .", "positive"))
    elif form == 4:
        c = rng.choice(cities)
        records.append((f"i live in {c} .", f"I live in {c}!", "positive"))
    elif form == 5:
        j = rng.choice(jobs)
        records.append((f"i work as a {j} .", f"i am employed as a {j} at a big company .", "positive"))
    else:
        h = rng.choice(hobbies)
        records.append((f"i like {h} a lot .", f"{h} is fun .", "positive"))

rng.shuffle(records)
out = sys.argv[1] if len(sys.argv) > 1 else "tests/data/dnli_fixture.jsonl"
with open(out, "w") as f:
    for s1, s2, label in records:
        f.write(json.dumps({"sentence1": s1, "sentence2": s2, "label": label}) + "\n")
