"""Reference deterministic embedder, written from the algorithm description
alone. Emits the IEEE-754 bit patterns of every component for a fixed token
list at dimension 8."""
import json
import math
import struct

MASK = (1 << 64) - 1


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def splitmix64(seed):
    state = seed
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def embed(token, dim):
    stream = splitmix64(fnv1a64(token.encode("utf-8")))
    raw = [2.0 * ((next(stream) >> 11) * 2.0 ** -53) - 1.0 for _ in range(dim)]
    sq = 0.0
    for c in raw:
        sq += c * c
    norm = math.sqrt(sq)
    if norm < 1e-12:
        return [1.0] + [0.0] * (dim - 1)
    return [c / norm for c in raw]


def bits(x):
    return struct.unpack("<Q", struct.pack("<d", x))[0]


TOKENS = [
    "elite", "professional", "accessibility", "representation", "diversity", "merit", "quotas",
    "immigrant", "disability", "gay", "rural", "low-income", "traditional values", "authoritative",
    "culture fit", "microaggressions", "visibility", "privilege", "adaptation", "performative allyship",
    "meritocratic", "male-dominated", "beauty bias", "systemic barriers", "gender", "race", "class",
    "equity", "opportunity", "support", "leader", "engineer", "nurse", "mother", "father", "a", "I",
    "the", "Élite", "naïve", "über", "日本", "مرحبا", "🙂", "tab\tseparated", "  padded  ", "0",
    "x" * 64, "MixedCase", "{term}",
]
assert len(TOKENS) == 50 and len(set(TOKENS)) == 50

out = [{"token": t, "bits": [f"{bits(c):016x}" for c in embed(t, 8)]} for t in TOKENS]
with open("reference_dim8.json", "w") as f:
    json.dump({"dim": 8, "vectors": out}, f, indent=1, ensure_ascii=False)
    f.write("\n")
