"""Tiered natural-language prompts from a closed word vocabulary.

A vague prompt names only the garment class, a medium one adds a single
attribute and a precise one names every applicable attribute. Each tier has
training templates and a disjoint set of held-out templates used by the
language test axis. Attribute words come from the measured buckets of the
garment's own pattern, so ground truth always satisfies its prompt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..metrics import measure_attributes
from ..tokenizer import N_SPECIAL
from .garments import ParamRecord, build_pattern

__all__ = ["TIERS", "PromptRecord", "TEMPLATES", "HELDOUT_TEMPLATES", "VOCAB",
           "gen_prompt", "garment_phrase", "tokenize_text", "word_ids",
           "format_constraints", "parse_constraints"]

TIERS = ("vague", "medium", "precise")

TEMPLATES = {
    "vague": (
        "something to wear to dinner maybe a {g}",
        "i need a {g} for the party tonight",
        "what should i wear this weekend perhaps a {g}",
        "surprise me with a {g}",
        "a comfy {g} for a lazy day",
        "make me a {g} i can feel good in",
        "i want to look nice so a {g} please",
        "show me a {g} for a date",
    ),
    "medium": (
        "i would like a {g} for the weekend",
        "please design a {g} for work",
        "can you make a {g} for summer",
        "looking for a {g} to wear to the office",
        "a {g} for a casual day out",
        "design a {g} for a trip",
        "i am thinking of a {g} for spring",
        "could i get a {g} for a picnic",
    ),
    "precise": (
        "a {g}",
        "generate a {g}",
        "create a {g}",
        "sewing pattern for a {g}",
        "make a {g}",
        "please generate a {g}",
        "design a {g}",
        "produce the pattern of a {g}",
    ),
}

HELDOUT_TEMPLATES = {
    "vague": (
        "my friend says i should wear a {g}",
        "anything works as long as it is a {g}",
        "feeling cozy today so give me a {g}",
    ),
    "medium": (
        "my sister wants a {g} for her birthday",
        "something like a {g} for the evening",
        "i saw a {g} and want one too",
    ),
    "precise": (
        "exactly a {g} and nothing else",
        "i need the pattern for a {g} please",
        "draft a {g}",
    ),
}

LENGTH_WORDS = {
    "skirt": {"short": "mini", "mid": "midi", "long": "maxi"},
    "tee": {"short": "cropped", "mid": "regular", "long": "longline"},
}
FLARE_WORDS = {"straight": "straight", "a-line": "a-line", "flared": "flared"}
SLEEVE_WORDS = {"none": "sleeveless", "short": "short-sleeved", "long": "long-sleeved"}
HEM_WORDS = {True: "rounded", False: "flat"}


def _vocab() -> tuple[str, ...]:
    words = set()
    for table in (TEMPLATES, HELDOUT_TEMPLATES):
        for group in table.values():
            for t in group:
                words.update(t.replace("{g}", "").split())
    for table in LENGTH_WORDS.values():
        words.update(table.values())
    words.update(FLARE_WORDS.values())
    words.update(SLEEVE_WORDS.values())
    words.update(HEM_WORDS.values())
    words.update(["skirt", "tee", "with", "a", "hem"])
    return tuple(sorted(words))


VOCAB = _vocab()
_WORD_ID = {w: N_SPECIAL + i for i, w in enumerate(VOCAB)}


@dataclass(frozen=True)
class PromptRecord:
    tier: str
    constraints: dict = field(hash=False)
    text: str = ""
    seed: int = 0
    template: int = 0
    heldout: bool = False


def garment_phrase(constraints: dict) -> str:
    cls = constraints["garment_class"]
    words = []
    if "length_bucket" in constraints:
        words.append(LENGTH_WORDS[cls][constraints["length_bucket"]])
    if "flare_bucket" in constraints:
        words.append(FLARE_WORDS[constraints["flare_bucket"]])
    if "sleeves" in constraints:
        words.append(SLEEVE_WORDS[constraints["sleeves"]])
    words.append(cls)
    if "hem_curved" in constraints:
        words += ["with", "a", HEM_WORDS[constraints["hem_curved"]], "hem"]
    return " ".join(words)


def gen_prompt(params: ParamRecord, tier: str, rng: np.random.Generator,
               heldout: bool = False, seed: int = 0) -> PromptRecord:
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    attrs = measure_attributes(build_pattern(params)).constraints()
    if tier == "vague":
        keys = ["garment_class"]
    elif tier == "medium":
        options = [k for k in attrs if k != "garment_class"]
        keys = ["garment_class", options[int(rng.integers(len(options)))]]
    else:
        keys = list(attrs)
    constraints = {k: attrs[k] for k in keys}
    group = (HELDOUT_TEMPLATES if heldout else TEMPLATES)[tier]
    k = int(rng.integers(len(group)))
    text = group[k].format(g=garment_phrase(constraints))
    return PromptRecord(tier, constraints, text, seed, k, heldout)


def tokenize_text(text: str) -> list[str]:
    return text.lower().split()


def word_ids(text: str) -> list[int]:
    """Token ids for a prompt; unknown words raise KeyError (closed vocabulary)."""
    return [_WORD_ID[w] for w in tokenize_text(text)]


def format_constraints(constraints: dict) -> str:
    def fmt(v):
        return ("true" if v else "false") if isinstance(v, bool) else str(v)

    return ";".join(f"{k}={fmt(v)}" for k, v in constraints.items())


def parse_constraints(text: str) -> dict:
    out = {}
    for item in filter(None, text.split(";")):
        k, v = item.split("=", 1)
        out[k] = {"true": True, "false": False}.get(v, v) if k == "hem_curved" else v
    return out
