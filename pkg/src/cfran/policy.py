"""Surrogate autoregressive token policy with Gumbel-Max sampling and replay.

Two context kinds drive decoding: an action context (prompt slots with
eta-smoothed specified values and fixed default priors for unspecified
slots) and a report context (fixed lexical distributions plus numeric
fields spelled in digit tokens).  Numeric fields may carry a distribution
over bucket texts; generation contexts use point masses, while quality
evaluation uses the posterior-predictive histogram, so the same
log-likelihood machinery scores both.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from cfran.buckets import (
    ReportSummary,
    delay_bucket_index,
    delay_bucket_text,
    thr_bucket_text,
)
from cfran.envsim import ActionConfig
from cfran.errors import (
    InvalidArgumentError,
    InvalidStateError,
    TruncatedOutputError,
)
from cfran.vocab import (
    DUR_VALUES,
    LOAD_VALUES,
    SCHEDULERS,
    SYNA_PROBS,
    SYNB_PROBS,
    TEMPLATE_PROBS,
    UE_VALUES,
    VOCAB,
)

MAX_DECODE_LEN = 64
SLOT_ETA = 0.05
# default prior for unspecified slots, peaked on (PF, 5 UEs, 5 Mbps, 5 s)
DEFAULT_PEAK = {"sched": "PF", "ues": 5, "load": 5.0, "dur": 5}
DEFAULT_PEAK_MASS = 0.5

POLICY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TokenSequence:
    indices: tuple[int, ...]
    terminated: bool = True

    def __post_init__(self):
        eos = VOCAB.eos
        for i, idx in enumerate(self.indices):
            if not (0 <= idx < VOCAB.size):
                raise InvalidArgumentError(f"token index {idx} out of range")
            if idx == eos and i != len(self.indices) - 1:
                raise InvalidArgumentError("EOS not at end of sequence")

    def __len__(self):
        return len(self.indices)

    def tokens(self) -> list[str]:
        return [VOCAB.token(i) for i in self.indices]


@dataclass
class GumbelTrace:
    """Recorded per-position Gumbel noise vectors for replay."""

    vectors: list[np.ndarray] = field(default_factory=list)
    role: str = "action"

    def __len__(self):
        return len(self.vectors)

    def validate(self, size: int):
        for v in self.vectors:
            if v.shape != (size,):
                raise InvalidArgumentError("trace vector length != vocabulary size")
        return self

    def copy(self) -> "GumbelTrace":
        return GumbelTrace([v.copy() for v in self.vectors], self.role)

    def to_dict(self) -> dict:
        return {"role": self.role, "vectors": [v.tolist() for v in self.vectors]}

    @classmethod
    def from_dict(cls, d: dict) -> "GumbelTrace":
        return cls([np.asarray(v, dtype=float) for v in d["vectors"]], d["role"])


def sample_gumbel_vector(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard Gumbel(0,1) draws via -log(-log(U))."""
    if size < 1:
        raise InvalidArgumentError("vocabulary size must be >= 1")
    u = rng.random(size)
    return -np.log(-np.log(u + 1e-20) + 1e-20)


def gumbel_max_select(dist: np.ndarray, noise: np.ndarray) -> int:
    """argmax_v { log dist[v] + noise[v] }; ties resolve to the lowest index."""
    dist = np.asarray(dist, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if dist.shape != noise.shape:
        raise InvalidArgumentError("distribution/noise length mismatch")
    if not np.any(dist > 0.0):
        raise InvalidArgumentError("all-zero distribution")
    with np.errstate(divide="ignore"):
        scores = np.where(dist > 0.0, np.log(dist) + noise, -np.inf)
    return int(np.argmax(scores))


def _group_dist(group_name: str, weights: dict[int, float]) -> np.ndarray:
    probs = np.zeros(VOCAB.size)
    for idx, w in weights.items():
        probs[idx] = w
    total = probs.sum()
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
        probs /= total
    return probs


def _slot_distribution(slot: str, specified, eta: float) -> np.ndarray:
    group = VOCAB.group(slot)
    if specified is not None:
        target = VOCAB.slot_value_index(slot, specified)
        if len(group) == 1:
            return _group_dist(slot, {target: 1.0})
        others = [g for g in group if g != target]
        w = {target: 1.0 - eta}
        for g in others:
            w[g] = eta / len(others)
        return _group_dist(slot, w)
    peak = VOCAB.slot_value_index(slot, DEFAULT_PEAK[slot])
    others = [g for g in group if g != peak]
    w = {peak: DEFAULT_PEAK_MASS}
    for g in others:
        w[g] = (1.0 - DEFAULT_PEAK_MASS) / len(others)
    return _group_dist(slot, w)


@dataclass(frozen=True)
class ActionContext:
    """Conditioning for the action generator: the prompt's slot values."""

    slots: dict
    eta: float = SLOT_ETA

    kind = "action"

    def plan_length(self) -> int:
        return 5

    def next_distribution(self, position: int, prefix: tuple[int, ...]) -> np.ndarray:
        if position != len(prefix):
            raise InvalidStateError("position is not the next unfilled slot")
        order = ("sched", "ues", "load", "dur")
        if position < 4:
            slot = order[position]
            for p, idx in enumerate(prefix):
                tok = VOCAB.token(idx)
                if not tok.startswith(order[p].upper() + "="):
                    raise InvalidStateError(f"prefix token {tok} outside slot grammar")
            return _slot_distribution(slot, self.slots.get(slot), self.eta)
        if position == 4:
            return _group_dist("eos", {VOCAB.eos: 1.0})
        raise InvalidStateError("action sequence already complete")


def _texts_dist(pairs) -> tuple[tuple[str, float], ...]:
    total = sum(p for _, p in pairs)
    return tuple((t, p / total) for t, p in pairs if p > 0.0)


@dataclass(frozen=True)
class ReportContext:
    """Conditioning for the report generator.

    Numeric fields are distributions over bucket texts; a concrete KPI
    summary yields point masses while a posterior-predictive context
    spreads mass over the plausible buckets.
    """

    scheduler: str
    thr_texts: tuple[tuple[str, float], ...]
    delay_texts: tuple[tuple[str, float], ...]
    trend_probs: tuple[tuple[str, float], ...]
    flag_thr_probs: tuple[float, float]  # (P[Y], P[N])
    flag_del_probs: tuple[float, float]

    kind = "report"

    @classmethod
    def from_summary(cls, config: ActionConfig, summary: ReportSummary) -> "ReportContext":
        return cls(
            scheduler=config.scheduler,
            thr_texts=((summary.thr_text(), 1.0),),
            delay_texts=((summary.delay_text(), 1.0),),
            trend_probs=((summary.trend, 1.0),),
            flag_thr_probs=(1.0, 0.0) if summary.flag_thr_high else (0.0, 1.0),
            flag_del_probs=(1.0, 0.0) if summary.flag_delay_high else (0.0, 1.0),
        )

    @classmethod
    def from_summaries(cls, config: ActionConfig, summaries, weights=None) -> "ReportContext":
        """Posterior-predictive context from weighted KPI summaries.

        Bucket histograms are smoothed over +/-2 neighboring buckets so a
        candidate near (but not exactly on) a pool bucket keeps a finite
        log-likelihood; trend and flag histograms get a small floor.
        """
        if not summaries:
            raise InvalidArgumentError("need at least one summary")
        if weights is None:
            weights = [1.0] * len(summaries)
        kernel = ((-2, 0.05), (-1, 0.2), (0, 0.5), (1, 0.2), (2, 0.05))
        thr: dict[int, float] = {}
        dly: dict[int, float] = {}
        trend: dict[str, float] = {t: 0.02 for t in ("UP", "DOWN", "FLAT")}
        fy = fn = gy = gn = 0.02
        for s, w in zip(summaries, weights):
            for off, kw in kernel:
                b = max(s.thr_bucket + off, 0)
                thr[b] = thr.get(b, 0.0) + w * kw
                b = max(s.delay_bucket + off, delay_bucket_index(0.0))
                dly[b] = dly.get(b, 0.0) + w * kw
            trend[s.trend] += w
            if s.flag_thr_high:
                fy += w
            else:
                fn += w
            if s.flag_delay_high:
                gy += w
            else:
                gn += w
        ftot = fy + fn
        gtot = gy + gn
        return cls(
            scheduler=config.scheduler,
            thr_texts=_texts_dist(sorted((thr_bucket_text(b), p) for b, p in thr.items())),
            delay_texts=_texts_dist(sorted((delay_bucket_text(b), p) for b, p in dly.items())),
            trend_probs=_texts_dist(sorted(trend.items())),
            flag_thr_probs=(fy / ftot, fn / ftot),
            flag_del_probs=(gy / gtot, gn / gtot),
        )

    # --- grammar walking -------------------------------------------------

    def _digit_field_dist(self, texts, emitted: str) -> np.ndarray | None:
        """Distribution over the next digit token, or None if complete."""
        live = [(t, p) for t, p in texts if t.startswith(emitted)]
        if not live:
            raise InvalidStateError(f"digits {emitted!r} outside numeric support")
        if any(t == emitted for t, _ in live):
            # supports are prefix-free, so an exact match means completion
            return None
        weights: dict[int, float] = {}
        for t, p in live:
            ch = t[len(emitted)]
            idx = VOCAB.index("DOT" if ch == "." else f"D{ch}")
            weights[idx] = weights.get(idx, 0.0) + p
        return _group_dist("digit", weights)

    def next_distribution(self, position: int, prefix: tuple[int, ...]) -> np.ndarray:
        if position != len(prefix):
            raise InvalidStateError("position is not the next unfilled slot")
        state = 0  # index into the fixed field order
        emitted = ""
        fields = ["tpl", "syna", "synb", "sched", "thr_mark", "thr_num",
                  "del_mark", "del_num", "trend", "flag_thr", "flag_del", "eos"]
        i = 0
        while i < len(prefix):
            f = fields[state]
            tok_idx = prefix[i]
            tok = VOCAB.token(tok_idx)
            if f in ("thr_num", "del_num"):
                texts = self.thr_texts if f == "thr_num" else self.delay_texts
                if tok_idx in VOCAB.group("digit"):
                    emitted += "." if tok == "DOT" else tok[1]
                    if self._digit_field_dist(texts, emitted) is None:
                        state += 1
                        emitted = ""
                    i += 1
                    continue
                raise InvalidStateError(f"expected digit, saw {tok}")
            group = VOCAB.group(f)
            if tok_idx not in group:
                raise InvalidStateError(f"expected {f} token, saw {tok}")
            state += 1
            i += 1
        f = fields[state]
        if f == "tpl":
            return _group_dist("tpl", dict(zip(VOCAB.group("tpl"), TEMPLATE_PROBS)))
        if f == "syna":
            return _group_dist("syna", dict(zip(VOCAB.group("syna"), SYNA_PROBS)))
        if f == "synb":
            return _group_dist("synb", dict(zip(VOCAB.group("synb"), SYNB_PROBS)))
        if f == "sched":
            return _group_dist("sched", {VOCAB.slot_value_index("sched", self.scheduler): 1.0})
        if f == "thr_mark":
            return _group_dist("thr_mark", {VOCAB.group("thr_mark")[0]: 1.0})
        if f == "del_mark":
            return _group_dist("del_mark", {VOCAB.group("del_mark")[0]: 1.0})
        if f in ("thr_num", "del_num"):
            texts = self.thr_texts if f == "thr_num" else self.delay_texts
            dist = self._digit_field_dist(texts, emitted)
            if dist is None:  # pragma: no cover - loop above already advanced
                raise InvalidStateError("numeric field already complete")
            return dist
        if f == "trend":
            weights = {}
            for name, p in self.trend_probs:
                weights[VOCAB.index(f"TREND={name}")] = p
            return _group_dist("trend", weights)
        if f == "flag_thr":
            y, n = self.flag_thr_probs
            g = VOCAB.group("flag_thr")
            return _group_dist("flag_thr", {g[0]: y, g[1]: n})
        if f == "flag_del":
            y, n = self.flag_del_probs
            g = VOCAB.group("flag_del")
            return _group_dist("flag_del", {g[0]: y, g[1]: n})
        if f == "eos":
            return _group_dist("eos", {VOCAB.eos: 1.0})
        raise InvalidStateError("report sequence already complete")


PolicyContext = ActionContext | ReportContext


def policy_next_distribution(ctx: PolicyContext, position: int,
                             prefix: tuple[int, ...]) -> np.ndarray:
    return ctx.next_distribution(position, prefix)


def decode_with_trace(ctx: PolicyContext, trace: GumbelTrace | None,
                      rng: np.random.Generator | None,
                      max_len: int = MAX_DECODE_LEN) -> tuple[TokenSequence, GumbelTrace]:
    """Autoregressive Gumbel-Max decoding, reusing trace vectors when given.

    Positions beyond the supplied trace draw fresh noise and are appended,
    so the returned trace always covers the emitted sequence.
    """
    role = "action" if ctx.kind == "action" else "report"
    out = GumbelTrace([], role)
    if trace is not None:
        trace.validate(VOCAB.size)
        out.vectors = [v.copy() for v in trace.vectors]
        out.role = trace.role
    indices: list[int] = []
    eos = VOCAB.eos
    for pos in range(max_len):
        dist = ctx.next_distribution(pos, tuple(indices))
        if pos < len(out.vectors):
            noise = out.vectors[pos]
        else:
            if rng is None:
                raise InvalidArgumentError("rng required beyond the trace length")
            noise = sample_gumbel_vector(rng, VOCAB.size)
            out.vectors.append(noise)
        tok = gumbel_max_select(dist, noise)
        indices.append(tok)
        if tok == eos:
            out.vectors = out.vectors[: len(indices)]
            return TokenSequence(tuple(indices), True), out
    raise TruncatedOutputError(
        f"no EOS within {max_len} tokens",
        partial=TokenSequence(tuple(indices), False),
    )


def sequence_loglik(ctx: PolicyContext, seq: TokenSequence) -> float:
    """Length-normalized log-likelihood of seq under the context's policy."""
    if len(seq) == 0:
        raise InvalidArgumentError("empty sequence")
    total = 0.0
    for pos, tok in enumerate(seq.indices):
        dist = ctx.next_distribution(pos, seq.indices[:pos])
        p = dist[tok]
        if p <= 0.0:
            return -math.inf
        total += math.log(p)
    return total / len(seq)


def action_config_from_sequence(seq: TokenSequence) -> ActionConfig:
    """Decode [SCHED, UES, LOAD, DUR, EOS] tokens into a config."""
    if len(seq.indices) != 5 or seq.indices[-1] != VOCAB.eos:
        raise InvalidStateError("action sequence must be 4 slots + EOS")
    values = {}
    for idx in seq.indices[:4]:
        slot, value = VOCAB.slot_value_of(idx)
        values[slot] = value
    return ActionConfig(
        scheduler=values["sched"],
        num_ues=values["ues"],
        load_mbps=float(values["load"]),
        duration_s=float(values["dur"]),
    )


def policy_tables_doc() -> dict:
    """Versioned description of the policy tables (for service/harness parity)."""
    return {
        "schema_version": POLICY_SCHEMA_VERSION,
        "eta": SLOT_ETA,
        "default_peak": {k: str(v) for k, v in DEFAULT_PEAK.items()},
        "default_peak_mass": DEFAULT_PEAK_MASS,
        "template_probs": list(TEMPLATE_PROBS),
        "syna_probs": list(SYNA_PROBS),
        "synb_probs": list(SYNB_PROBS),
        "max_decode_len": MAX_DECODE_LEN,
        "slot_values": {
            "sched": list(SCHEDULERS),
            "ues": list(UE_VALUES),
            "load": list(LOAD_VALUES),
            "dur": list(DUR_VALUES),
        },
    }


def policy_tables_json() -> str:
    return json.dumps(policy_tables_doc(), indent=1)


def check_policy_tables(doc: dict):
    if doc != policy_tables_doc():
        raise InvalidArgumentError("policy tables differ from this build")
