"""Report scoring: ROUGE-L, set similarity, quality, admission, facts.

ROUGE-L operates on the symbolic token sequences (the grammar defines the
semantic units, and digit tokens give numeric fields partial credit).
Admission is a deterministic fact match: scheduler and trend must agree
exactly, throughput and delay buckets within one bucket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from cfran import policy
from cfran.buckets import delay_bucket_from_text, thr_bucket_from_text
from cfran.errors import InvalidArgumentError, ReportParseError
from cfran.policy import ReportContext, TokenSequence
from cfran.vocab import VOCAB, digits_to_text


@dataclass(frozen=True)
class ReportFacts:
    scheduler: str
    thr_bucket: int
    delay_bucket: int
    trend: str
    flag_thr_high: bool
    flag_delay_high: bool


def rouge_l(candidate: TokenSequence, reference: TokenSequence) -> float:
    """ROUGE-L F measure: F = 2PR/(P+R) with LCS-based precision/recall."""
    a = candidate.indices
    b = reference.indices
    if not a or not b:
        raise InvalidArgumentError("rouge_l inputs must be non-empty")
    m, n = len(a), len(b)
    prev = [0] * (n + 1)
    for i in range(1, m + 1):
        cur = [0] * (n + 1)
        ai = a[i - 1]
        for j in range(1, n + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    lcs = prev[n]
    if lcs == 0:
        return 0.0
    p = lcs / m
    r = lcs / n
    return 2.0 * p * r / (p + r)


def similarity_to_set(members: list[TokenSequence], candidate: TokenSequence) -> float:
    """Max ROUGE-L against the set; -inf for an empty set."""
    if not members:
        return -math.inf
    return max(rouge_l(candidate, ref) for ref in members)


def quality_score(context: ReportContext, candidate: TokenSequence) -> float:
    """Normalized log-likelihood of the candidate under a report context."""
    try:
        return policy.sequence_loglik(context, candidate)
    except policy.InvalidStateError:
        return -math.inf


def confidence(qualities) -> float:
    """Set-level stopping score: the best member quality; -inf when empty."""
    qualities = list(qualities)
    if not qualities:
        return -math.inf
    return max(qualities)


def extract_facts(report: TokenSequence) -> ReportFacts:
    """Exact inverse of the report grammar; raises on out-of-grammar input."""
    toks = report.indices
    pos = 0

    def expect(group: str) -> int:
        nonlocal pos
        if pos >= len(toks):
            raise ReportParseError(f"report truncated before {group}")
        idx = toks[pos]
        if idx not in VOCAB.group(group):
            raise ReportParseError(f"expected {group}, saw {VOCAB.token(idx)}")
        pos += 1
        return idx

    def digit_run() -> str:
        nonlocal pos
        start = pos
        digit_group = VOCAB.group("digit")
        while pos < len(toks) and toks[pos] in digit_group:
            pos += 1
        if pos == start:
            raise ReportParseError("empty numeric field")
        return digits_to_text(list(toks[start:pos]))

    expect("tpl")
    expect("syna")
    expect("synb")
    sched_idx = expect("sched")
    expect("thr_mark")
    thr_text = digit_run()
    expect("del_mark")
    delay_text = digit_run()
    trend_idx = expect("trend")
    flag_t_idx = expect("flag_thr")
    flag_d_idx = expect("flag_del")
    expect("eos")
    if pos != len(toks):
        raise ReportParseError("trailing tokens after EOS")
    try:
        thr_bucket = thr_bucket_from_text(thr_text)
        delay_bucket = delay_bucket_from_text(delay_text)
    except ValueError as exc:
        raise ReportParseError(f"bad numeric field: {exc}") from exc
    return ReportFacts(
        scheduler=VOCAB.token(sched_idx).split("=")[1],
        thr_bucket=thr_bucket,
        delay_bucket=delay_bucket,
        trend=VOCAB.token(trend_idx).split("=")[1],
        flag_thr_high=VOCAB.token(flag_t_idx).endswith("Y"),
        flag_delay_high=VOCAB.token(flag_d_idx).endswith("Y"),
    )


def admission(candidate: TokenSequence, reference: TokenSequence) -> int:
    """1 iff the candidate is a good-enough match of the reference report."""
    c = extract_facts(candidate)
    r = extract_facts(reference)
    ok = (
        c.scheduler == r.scheduler
        and c.trend == r.trend
        and abs(c.thr_bucket - r.thr_bucket) <= 1
        and abs(c.delay_bucket - r.delay_bucket) <= 1
    )
    return 1 if ok else 0


_TPL_TEXT = (
    "Run complete.",
    "Here are the results.",
    "Summary of the requested experiment.",
)
_SYNA_TEXT = ("The cell served the offered traffic", "The scheduler handled the load")
_SYNB_TEXT = ("as configured", "per the request", "for this run")
_TREND_TEXT = {"UP": "rising", "DOWN": "falling", "FLAT": "stable"}


def render_report_text(report: TokenSequence) -> str:
    """Human-readable surface form of a report token sequence."""
    facts = extract_facts(report)
    tpl = _TPL_TEXT[VOCAB.group("tpl").index(report.indices[0])]
    syna = _SYNA_TEXT[VOCAB.group("syna").index(report.indices[1])]
    synb = _SYNB_TEXT[VOCAB.group("synb").index(report.indices[2])]
    toks = report.indices
    digit_group = VOCAB.group("digit")
    i = toks.index(VOCAB.group("thr_mark")[0]) + 1
    thr_digits = []
    while toks[i] in digit_group:
        thr_digits.append(toks[i])
        i += 1
    i = toks.index(VOCAB.group("del_mark")[0]) + 1
    del_digits = []
    while toks[i] in digit_group:
        del_digits.append(toks[i])
        i += 1
    thr_txt = digits_to_text(thr_digits)
    del_txt = digits_to_text(del_digits)
    sched_name = "proportional fair" if facts.scheduler == "PF" else "round robin"
    return (
        f"{tpl} {syna} {synb} under the {sched_name} scheduler. "
        f"Average per-UE throughput was {thr_txt} Mbps with a typical delay of "
        f"{del_txt} ms. The throughput trend is {_TREND_TEXT[facts.trend]}. "
        f"Throughput stayed {'above' if facts.flag_thr_high else 'below'} 5 Mbps and "
        f"delay {'above' if facts.flag_delay_high else 'below'} 15 ms for most of the run."
    )
