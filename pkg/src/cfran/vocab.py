"""Symbolic token vocabulary shared by the action and report generators.

Sequences follow a fixed slot grammar: an action is
[SCHED, UES, LOAD, DUR, EOS] and a report is
[TPL, SYNA, SYNB, SCHED, THR-marker, thr digits, DEL-marker, del digits,
TREND, FLAGT, FLAGD, EOS].  Numeric fields are spelled with digit tokens so
the vocabulary stays small while delay values can span several orders of
magnitude.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEDULERS = ("RR", "PF")
UE_VALUES = tuple(range(3, 11))
LOAD_VALUES = tuple(round(2.0 + 0.5 * i, 1) for i in range(17))  # 2.0 .. 10.0
DUR_VALUES = tuple(range(5, 11))  # 5 .. 10 s

ACTION_SLOTS = ("sched", "ues", "load", "dur")

# Lexical banks for the report surface; probabilities are the fixed
# "style" distribution of the surrogate report generator.
TEMPLATE_PROBS = (0.5, 0.3, 0.2)
SYNA_PROBS = (0.6, 0.4)
SYNB_PROBS = (0.5, 0.25, 0.25)

TRENDS = ("UP", "DOWN", "FLAT")

VOCAB_SCHEMA_VERSION = 1


def _action_token(slot: str, value) -> str:
    return f"{slot.upper()}={value}"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token inventory with stable indices and slot-group lookup."""

    tokens: tuple[str, ...]
    groups: dict[str, tuple[int, ...]] = field(repr=False)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        if not self.tokens:
            raise ValueError("empty vocabulary")
        object.__setattr__(
            self, "_index", {tok: i for i, tok in enumerate(self.tokens)}
        )

    @property
    def size(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        return self._index[token]

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def group(self, name: str) -> tuple[int, ...]:
        return self.groups[name]

    @property
    def eos(self) -> int:
        return self.index("EOS")

    def slot_value_index(self, slot: str, value) -> int:
        return self.index(_action_token(slot, value))

    def slot_value_of(self, idx: int) -> tuple[str, object]:
        """Inverse of slot_value_index for action tokens."""
        tok = self.tokens[idx]
        name, raw = tok.split("=", 1)
        slot = name.lower()
        if slot == "sched":
            return slot, raw
        if slot == "ues" or slot == "dur":
            return slot, int(raw)
        if slot == "load":
            return slot, float(raw)
        raise ValueError(f"not an action slot token: {tok}")

    def to_json(self) -> str:
        doc = {
            "schema_version": VOCAB_SCHEMA_VERSION,
            "tokens": list(self.tokens),
            "groups": {k: list(v) for k, v in self.groups.items()},
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        doc = json.loads(text)
        if doc.get("schema_version") != VOCAB_SCHEMA_VERSION:
            raise ValueError(f"unsupported vocabulary schema: {doc.get('schema_version')}")
        return cls(
            tokens=tuple(doc["tokens"]),
            groups={k: tuple(v) for k, v in doc["groups"].items()},
        )


def build_vocabulary() -> Vocabulary:
    tokens: list[str] = []
    groups: dict[str, list[int]] = {}

    def add_group(name: str, toks: list[str]):
        start = len(tokens)
        tokens.extend(toks)
        groups[name] = list(range(start, len(tokens)))

    add_group("sched", [_action_token("sched", s) for s in SCHEDULERS])
    add_group("ues", [_action_token("ues", u) for u in UE_VALUES])
    add_group("load", [_action_token("load", l) for l in LOAD_VALUES])
    add_group("dur", [_action_token("dur", d) for d in DUR_VALUES])
    add_group("tpl", [f"TPL{i}" for i in range(len(TEMPLATE_PROBS))])
    add_group("syna", [f"SYNA{i}" for i in range(len(SYNA_PROBS))])
    add_group("synb", [f"SYNB{i}" for i in range(len(SYNB_PROBS))])
    add_group("digit", [f"D{i}" for i in range(10)] + ["DOT"])
    add_group("thr_mark", ["THR:"])
    add_group("del_mark", ["DEL:"])
    add_group("trend", [f"TREND={t}" for t in TRENDS])
    add_group("flag_thr", ["THRHI=Y", "THRHI=N"])
    add_group("flag_del", ["DELHI=Y", "DELHI=N"])
    add_group("eos", ["EOS"])

    return Vocabulary(tokens=tuple(tokens), groups={k: tuple(v) for k, v in groups.items()})


VOCAB = build_vocabulary()


def digit_token_indices(text: str) -> list[int]:
    """Token indices spelling a numeric string like '5.0'."""
    out = []
    for ch in text:
        out.append(VOCAB.index("DOT" if ch == "." else f"D{ch}"))
    return out


def digits_to_text(indices: list[int]) -> str:
    chars = []
    for idx in indices:
        tok = VOCAB.token(idx)
        chars.append("." if tok == "DOT" else tok[1])
    return "".join(chars)
