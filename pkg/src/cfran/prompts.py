"""Operator-intent prompt templates: rendering, parsing, editing.

Prompts are natural-language configuration requests assembled from eight
skeletons plus synonym banks, with exact slot recovery by parsing.  The
style seed fixes every phrasing choice, so rendering is deterministic and
two seeds with the same slots differ only in surface text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from cfran.errors import InvalidArgumentError, PromptParseError
from cfran.vocab import DUR_VALUES, LOAD_VALUES, UE_VALUES

NUMBER_WORDS = {
    3: "three", 4: "four", 5: "five", 6: "six", 7: "seven",
    8: "eight", 9: "nine", 10: "ten",
}
WORD_NUMBERS = {w: n for n, w in NUMBER_WORDS.items()}

INTROS = (
    "Run a 5G simulation",
    "Please set up a cell test",
    "Configure the base station",
    "I need a downlink experiment",
    "Launch a scheduler trial",
    "Spin up the radio sim",
    "Kick off an air interface run",
    "Start a coverage check",
)

SCHED_NAMES = {
    "PF": ("the proportional fair scheduler", "the PF scheduler"),
    "RR": ("the round robin scheduler", "the RR scheduler"),
}
SCHED_CLAUSES = ("using {name}", "with {name}", "under {name}")
UES_CLAUSES = ("with {n} users", "with {n} UEs", "serving {n} users")
LOAD_CLAUSES = ("at {v} Mbps per user", "at {v} Mbps each", "offering {v} Mbps per UE")
DUR_CLAUSES = ("for {d} seconds", "over a {d} second window", "running {d} seconds")

SLOT_ORDERS = (
    ("ues", "sched", "load", "dur"),
    ("sched", "ues", "dur", "load"),
    ("dur", "ues", "load", "sched"),
    ("ues", "load", "sched", "dur"),
)

_FILLER = set()
for _s in INTROS + SCHED_CLAUSES + UES_CLAUSES + LOAD_CLAUSES + DUR_CLAUSES:
    _FILLER.update(re.findall(r"[a-z0-9]+", _s.lower()))
for _bank in SCHED_NAMES.values():
    for _s in _bank:
        _FILLER.update(re.findall(r"[a-z]+", _s.lower()))
_FILLER.update(WORD_NUMBERS)
_FILLER.discard("n")
_FILLER.discard("v")
_FILLER.discard("d")

SLOT_RANGES = {
    "sched": set(SCHED_NAMES),
    "ues": set(UE_VALUES),
    "load": set(LOAD_VALUES),
    "dur": set(DUR_VALUES),
}


def validate_slot(slot: str, value) -> None:
    if slot not in SLOT_RANGES:
        raise InvalidArgumentError(f"unknown slot {slot!r}")
    if slot == "load":
        if float(value) not in SLOT_RANGES["load"]:
            raise InvalidArgumentError(f"load {value} not on the 0.5 Mbps grid in [2, 10]")
    elif value not in SLOT_RANGES[slot]:
        raise InvalidArgumentError(f"{slot} value {value!r} out of range")


@dataclass(frozen=True)
class PromptSpec:
    """Rendered intent text plus the slot values it encodes."""

    text: str
    slots: dict
    style_seed: int

    def specified(self) -> dict:
        return {k: v for k, v in self.slots.items() if v is not None}


@dataclass(frozen=True)
class EditSpec:
    """A controlled edit: change one or two slots and/or the phrasing."""

    changes: dict = field(default_factory=dict)
    style_seed: int | None = None

    def validate(self, base: PromptSpec) -> "EditSpec":
        if len(self.changes) > 2:
            raise InvalidArgumentError("at most two slots may change")
        for slot, value in self.changes.items():
            validate_slot(slot, value)
            if base.slots.get(slot) == value:
                raise InvalidArgumentError(f"edit does not change slot {slot!r}")
        if not self.changes and self.style_seed is None:
            raise InvalidArgumentError("edit changes nothing")
        if not self.changes and self.style_seed == base.style_seed:
            raise InvalidArgumentError("edit changes nothing")
        return self


def render_prompt(slots: dict, style_seed: int) -> PromptSpec:
    """Deterministic text for the given slot values (missing slots omitted)."""
    clean = {}
    for slot, value in slots.items():
        if value is None:
            continue
        validate_slot(slot, value)
        clean[slot] = value
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(style_seed))))
    intro = INTROS[int(rng.integers(len(INTROS)))]
    order = SLOT_ORDERS[int(rng.integers(len(SLOT_ORDERS)))]
    clauses = []
    for slot in order:
        if slot not in clean:
            continue
        value = clean[slot]
        if slot == "sched":
            name = SCHED_NAMES[value][int(rng.integers(2))]
            clauses.append(SCHED_CLAUSES[int(rng.integers(3))].format(name=name))
        elif slot == "ues":
            variant = int(rng.integers(3))
            n = NUMBER_WORDS[value] if variant == 0 else str(value)
            clause = UES_CLAUSES[int(rng.integers(3))]
            clauses.append(clause.format(n=n))
        elif slot == "load":
            clauses.append(LOAD_CLAUSES[int(rng.integers(3))].format(v=f"{value:g}"))
        elif slot == "dur":
            clauses.append(DUR_CLAUSES[int(rng.integers(3))].format(d=value))
    text = intro + (" " + " ".join(clauses) if clauses else "") + "."
    return PromptSpec(text=text, slots={s: clean.get(s) for s in SLOT_RANGES}, style_seed=int(style_seed))


_DUR_RE = re.compile(r"\b(\d+)\s+second(?:s|\s+window)\b", re.IGNORECASE)
_LOAD_RE = re.compile(r"\b(\d+(?:\.\d+)?)\s+Mbps\b", re.IGNORECASE)
_UES_RE = re.compile(
    r"\b(\d+|three|four|five|six|seven|eight|nine|ten)\s+(?:users|UEs)\b",
    re.IGNORECASE,
)
_SCHED_LONG_RE = re.compile(r"\b(proportional fair|round robin)\b", re.IGNORECASE)
_SCHED_SHORT_RE = re.compile(r"\b(PF|RR)\b")


def parse_prompt(text: str) -> dict:
    """Recover slot values; raises PromptParseError outside the grammar."""
    remaining = text
    slots: dict = {s: None for s in SLOT_RANGES}

    m = _DUR_RE.search(remaining)
    if m:
        value = int(m.group(1))
        if value not in SLOT_RANGES["dur"]:
            raise PromptParseError(f"duration {value} out of range", m.group(0))
        slots["dur"] = value
        remaining = remaining.replace(m.group(0), " ", 1)
    m = _LOAD_RE.search(remaining)
    if m:
        value = float(m.group(1))
        if value not in SLOT_RANGES["load"]:
            raise PromptParseError(f"load {value} out of range", m.group(0))
        slots["load"] = value
        remaining = remaining.replace(m.group(0), " ", 1)
    m = _UES_RE.search(remaining)
    if m:
        raw = m.group(1).lower()
        value = WORD_NUMBERS.get(raw)
        if value is None:
            value = int(raw)
        if value not in SLOT_RANGES["ues"]:
            raise PromptParseError(f"UE count {value} out of range", m.group(0))
        slots["ues"] = value
        remaining = remaining.replace(m.group(0), " ", 1)
    m = _SCHED_LONG_RE.search(remaining)
    if m:
        slots["sched"] = "PF" if m.group(1).lower().startswith("proportional") else "RR"
        remaining = remaining.replace(m.group(0), " ", 1)
    else:
        m = _SCHED_SHORT_RE.search(remaining)
        if m:
            slots["sched"] = m.group(1)
            remaining = remaining.replace(m.group(0), " ", 1)

    for word in re.findall(r"[A-Za-z0-9.]+", remaining):
        w = word.lower().rstrip(".")
        if w and w not in _FILLER:
            raise PromptParseError(f"unrecognized fragment {word!r}", word)
    return slots


def edit_prompt(base: PromptSpec, edit: EditSpec) -> PromptSpec:
    """Apply a validated edit and re-render; unedited slots are unchanged."""
    edit.validate(base)
    slots = dict(base.slots)
    slots.update(edit.changes)
    seed = base.style_seed if edit.style_seed is None else edit.style_seed
    return render_prompt(slots, seed)
