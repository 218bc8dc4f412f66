"""Episode orchestration: factual runs, counterfactual estimators, dataset.

The counterfactual generator (CG) follows abduction -> action replay ->
twin rollout -> report replay.  Two exact shortcuts apply when the replayed
action pins the environment output: an identical action means the factual
feedback is the counterfactual feedback, and a pure duration truncation is
a causal prefix of the factual feedback (the simulator's noise streams are
time-causal, which the test suite asserts).

IG reruns the full system on the real environment with fresh randomness;
SIG does the same against the twin.  The evaluation-only oracle replays
the hidden true noise and is never visible to CG or abduction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from cfran import textmetrics
from cfran.abduction import AbcConfig, AbcPosterior, PosteriorModel, posterior_sample
from cfran.buckets import ReportSummary
from cfran.envsim import (
    REAL_FIDELITY,
    TWIN_FIDELITY,
    ActionConfig,
    ExogenousNoise,
    FidelityLevel,
    KpiSeries,
    run_environment,
    sample_exogenous_prior,
)
from cfran.errors import InvalidArgumentError
from cfran.policy import (
    ActionContext,
    GumbelTrace,
    ReportContext,
    TokenSequence,
    action_config_from_sequence,
    decode_with_trace,
    sample_gumbel_vector,
)
from cfran.prompts import EditSpec, PromptSpec, edit_prompt, render_prompt
from cfran.vocab import DUR_VALUES, LOAD_VALUES, SCHEDULERS, UE_VALUES, VOCAB

REPORT_TRACE_PAD = 40


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass
class Episode:
    """Factual quadruple plus the recorded agent noise traces."""

    episode_id: str
    prompt: PromptSpec
    action_seq: TokenSequence
    action: ActionConfig
    kpis: KpiSeries
    report_seq: TokenSequence
    report_text: str
    action_trace: GumbelTrace
    report_trace: GumbelTrace

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "prompt": {"text": self.prompt.text, "slots": self.prompt.slots,
                       "style_seed": self.prompt.style_seed},
            "action_seq": list(self.action_seq.indices),
            "action": vars(self.action),
            "kpis": self.kpis.to_dict(),
            "report_seq": list(self.report_seq.indices),
            "report_text": self.report_text,
            "action_trace": self.action_trace.to_dict(),
            "report_trace": self.report_trace.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        return cls(
            episode_id=d["episode_id"],
            prompt=PromptSpec(d["prompt"]["text"], d["prompt"]["slots"],
                              d["prompt"]["style_seed"]),
            action_seq=TokenSequence(tuple(d["action_seq"])),
            action=ActionConfig(**d["action"]),
            kpis=KpiSeries.from_dict(d["kpis"]),
            report_seq=TokenSequence(tuple(d["report_seq"])),
            report_text=d["report_text"],
            action_trace=GumbelTrace.from_dict(d["action_trace"]),
            report_trace=GumbelTrace.from_dict(d["report_trace"]),
        )


@dataclass(frozen=True)
class HiddenNoiseRecord:
    """Evaluation-only: the true environment noise behind an episode."""

    episode_id: str
    noise: ExogenousNoise


@dataclass
class DatasetRecord:
    """One calibration/test item: factual episode, edit, and the truth."""

    record_id: str
    prompt: PromptSpec
    edit: EditSpec
    cf_prompt: PromptSpec
    episode: Episode
    true_report_seq: TokenSequence
    true_report_text: str
    stream_seed: int

    def to_json(self) -> str:
        return json.dumps({
            "record_id": self.record_id,
            "edit": {"changes": self.edit.changes, "style_seed": self.edit.style_seed},
            "cf_prompt": {"text": self.cf_prompt.text, "slots": self.cf_prompt.slots,
                          "style_seed": self.cf_prompt.style_seed},
            "episode": self.episode.to_dict(),
            "true_report_seq": list(self.true_report_seq.indices),
            "true_report_text": self.true_report_text,
            "stream_seed": self.stream_seed,
        })

    @classmethod
    def from_json(cls, line: str) -> "DatasetRecord":
        d = json.loads(line)
        ep = Episode.from_dict(d["episode"])
        return cls(
            record_id=d["record_id"],
            prompt=ep.prompt,
            edit=EditSpec(d["edit"]["changes"], d["edit"]["style_seed"]),
            cf_prompt=PromptSpec(d["cf_prompt"]["text"], d["cf_prompt"]["slots"],
                                 d["cf_prompt"]["style_seed"]),
            episode=ep,
            true_report_seq=TokenSequence(tuple(d["true_report_seq"])),
            true_report_text=d["true_report_text"],
            stream_seed=d["stream_seed"],
        )


def _pad_trace(trace: GumbelTrace, length: int, rng: np.random.Generator) -> GumbelTrace:
    """Record extra noise positions so later replays never need fresh draws."""
    while len(trace.vectors) < length:
        trace.vectors.append(sample_gumbel_vector(rng, VOCAB.size))
    return trace


def decode_action(prompt: PromptSpec, trace: GumbelTrace | None,
                  rng: np.random.Generator | None) -> tuple[TokenSequence, GumbelTrace, ActionConfig]:
    ctx = ActionContext(prompt.specified())
    seq, out = decode_with_trace(ctx, trace, rng)
    return seq, out, action_config_from_sequence(seq)


def decode_report(config: ActionConfig, kpis: KpiSeries,
                  trace: GumbelTrace | None,
                  rng: np.random.Generator | None) -> tuple[TokenSequence, GumbelTrace]:
    ctx = ReportContext.from_summary(config, ReportSummary.from_kpis(kpis))
    return decode_with_trace(ctx, trace, rng)


def run_factual_episode(prompt: PromptSpec, rng: np.random.Generator,
                        episode_id: str = "ep0") -> tuple[Episode, HiddenNoiseRecord]:
    """Decode an action, run the real environment, decode the report."""
    action_seq, action_trace, config = decode_action(prompt, None, rng)
    noise = sample_exogenous_prior(rng)
    kpis = run_environment(config, noise, FidelityLevel(REAL_FIDELITY))
    report_seq, report_trace = decode_report(config, kpis, None, rng)
    _pad_trace(report_trace, REPORT_TRACE_PAD, rng)
    episode = Episode(
        episode_id=episode_id,
        prompt=prompt,
        action_seq=action_seq,
        action=config,
        kpis=kpis,
        report_seq=report_seq,
        report_text=textmetrics.render_report_text(report_seq),
        action_trace=action_trace,
        report_trace=report_trace,
    )
    return episode, HiddenNoiseRecord(episode_id, noise)


def _truncate_kpis(kpis: KpiSeries, n_windows: int) -> KpiSeries:
    return KpiSeries(
        sample_period_s=kpis.sample_period_s,
        throughput_mbps=kpis.throughput_mbps[:n_windows].copy(),
        delay_ms=kpis.delay_ms[:n_windows].copy(),
        delivered_bits=kpis.delivered_bits[:n_windows].copy(),
    )


def _is_duration_truncation(factual: ActionConfig, cf: ActionConfig) -> bool:
    return (
        cf.scheduler == factual.scheduler
        and cf.num_ues == factual.num_ues
        and cf.load_mbps == factual.load_mbps
        and cf.duration_s < factual.duration_s
    )


def counterfactual_feedback(episode: Episode, cf_config: ActionConfig,
                            noise: ExogenousNoise,
                            fidelity: FidelityLevel) -> KpiSeries:
    """Environment rollout for a counterfactual action.

    When the action is unchanged the factual feedback is returned exactly;
    a pure duration cut returns the causal prefix of the factual feedback.
    Anything else runs the supplied noise through the given fidelity.
    """
    if cf_config == episode.action:
        return episode.kpis
    if _is_duration_truncation(episode.action, cf_config):
        return _truncate_kpis(episode.kpis, int(cf_config.duration_s / 0.2 + 1e-9))
    return run_environment(cf_config, noise, fidelity)


@dataclass
class CgResult:
    action_seq: TokenSequence
    action: ActionConfig
    kpis_hat: KpiSeries
    report_seq: TokenSequence
    report_text: str


def run_cg(episode: Episode, cf_prompt: PromptSpec, posterior,
           rng: np.random.Generator,
           twin: FidelityLevel = FidelityLevel(TWIN_FIDELITY)) -> CgResult:
    """Counterfactual generation: abduct, replay, simulate, replay report.

    ``posterior`` supplies the abducted noise: an AbcPosterior pool, an
    AbcConfig (pool built on the fly), a trained PosteriorModel, or an
    explicit ExogenousNoise (oracle test hook).
    """
    action_seq, _, cf_config = decode_action(cf_prompt, episode.action_trace, None)
    if isinstance(posterior, AbcPosterior):
        noise = posterior.draw(rng)
    elif isinstance(posterior, AbcConfig):
        noise = AbcPosterior.build(episode.action, episode.kpis, posterior, rng).draw(rng)
    elif isinstance(posterior, PosteriorModel):
        noise = posterior_sample(posterior, episode.action, episode.kpis, rng)
    elif isinstance(posterior, ExogenousNoise):
        noise = posterior
    else:
        raise InvalidArgumentError(f"unsupported posterior {type(posterior).__name__}")
    kpis_hat = counterfactual_feedback(episode, cf_config, noise, twin)
    report_seq, _ = decode_report(cf_config, kpis_hat, episode.report_trace, None)
    return CgResult(
        action_seq=action_seq,
        action=cf_config,
        kpis_hat=kpis_hat,
        report_seq=report_seq,
        report_text=textmetrics.render_report_text(report_seq),
    )


@dataclass
class InterventionResult:
    action: ActionConfig
    kpis: KpiSeries
    report_seq: TokenSequence
    report_text: str


def run_ig(cf_prompt: PromptSpec, rng: np.random.Generator) -> InterventionResult:
    """Interventional baseline: independent fresh run on the real system."""
    _, _, config = decode_action(cf_prompt, None, rng)
    noise = sample_exogenous_prior(rng)
    kpis = run_environment(config, noise, FidelityLevel(REAL_FIDELITY))
    report_seq, _ = decode_report(config, kpis, None, rng)
    return InterventionResult(config, kpis, report_seq,
                              textmetrics.render_report_text(report_seq))


def run_sig(cf_prompt: PromptSpec, rng: np.random.Generator,
            twin: FidelityLevel = FidelityLevel(TWIN_FIDELITY)) -> InterventionResult:
    """Simulated interventional baseline: fresh run on the twin."""
    _, _, config = decode_action(cf_prompt, None, rng)
    noise = sample_exogenous_prior(rng)
    kpis = run_environment(config, noise, twin)
    report_seq, _ = decode_report(config, kpis, None, rng)
    return InterventionResult(config, kpis, report_seq,
                              textmetrics.render_report_text(report_seq))


def true_counterfactual(episode: Episode, hidden: HiddenNoiseRecord,
                        cf_prompt: PromptSpec) -> tuple[TokenSequence, str, ActionConfig, KpiSeries]:
    """Evaluation-only ground truth: replay with the true noise at full
    fidelity."""
    if hidden.episode_id != episode.episode_id:
        raise InvalidArgumentError("hidden noise does not belong to this episode")
    _, _, cf_config = decode_action(cf_prompt, episode.action_trace, None)
    kpis = counterfactual_feedback(episode, cf_config, hidden.noise,
                                   FidelityLevel(REAL_FIDELITY))
    report_seq, _ = decode_report(cf_config, kpis, episode.report_trace, None)
    return report_seq, textmetrics.render_report_text(report_seq), cf_config, kpis


def _sample_slots(rng: np.random.Generator) -> dict:
    slots = {
        "sched": SCHEDULERS[int(rng.integers(2))],
        "ues": int(UE_VALUES[int(rng.integers(len(UE_VALUES)))]),
        "load": float(LOAD_VALUES[int(rng.integers(len(LOAD_VALUES)))]),
        "dur": int(DUR_VALUES[int(rng.integers(len(DUR_VALUES)))]),
    }
    # a fifth of the prompts leave one slot to the agent's default prior
    if rng.random() < 0.2:
        drop = ("sched", "ues", "load", "dur")[int(rng.integers(4))]
        slots[drop] = None
    return slots


def _sample_edit(prompt: PromptSpec, rng: np.random.Generator) -> EditSpec:
    """40% one-slot, 40% two-slot, 20% phrasing-only edits."""
    u = rng.random()
    if u < 0.2:
        new_seed = int(rng.integers(1, 2**31))
        while new_seed == prompt.style_seed:
            new_seed = int(rng.integers(1, 2**31))
        return EditSpec({}, style_seed=new_seed)
    n_changes = 1 if u < 0.6 else 2
    slot_order = list(rng.permutation(("sched", "ues", "load", "dur")))
    changes: dict = {}
    pools = {"sched": list(SCHEDULERS), "ues": list(UE_VALUES),
             "load": list(LOAD_VALUES), "dur": list(DUR_VALUES)}
    for slot in slot_order:
        if len(changes) == n_changes:
            break
        options = [v for v in pools[slot] if v != prompt.slots.get(slot)]
        value = options[int(rng.integers(len(options)))]
        if slot == "ues" or slot == "dur":
            value = int(value)
        elif slot == "load":
            value = float(value)
        changes[slot] = value
    return EditSpec(changes)


def generate_dataset(n: int, seed: int) -> tuple[list[DatasetRecord], dict[str, HiddenNoiseRecord]]:
    """Build n records with factual episodes and true counterfactuals.

    Returns the records plus a separate sidecar of hidden noise keyed by
    episode id; the sidecar never travels with the records.
    """
    if n < 1:
        raise InvalidArgumentError("dataset size must be >= 1")
    records: list[DatasetRecord] = []
    sidecar: dict[str, HiddenNoiseRecord] = {}
    for i in range(n):
        rng = _rng(seed, i)
        prompt = render_prompt(_sample_slots(rng), int(rng.integers(1, 2**31)))
        episode, hidden = run_factual_episode(prompt, rng, episode_id=f"r{i:04d}")
        edit = _sample_edit(prompt, rng)
        cf_prompt = edit_prompt(prompt, edit)
        true_seq, true_text, _, _ = true_counterfactual(episode, hidden, cf_prompt)
        records.append(DatasetRecord(
            record_id=f"r{i:04d}",
            prompt=prompt,
            edit=edit,
            cf_prompt=cf_prompt,
            episode=episode,
            true_report_seq=true_seq,
            true_report_text=true_text,
            stream_seed=int(_rng(seed, i, 999).integers(0, 2**31)),
        ))
        sidecar[episode.episode_id] = hidden
    return records, sidecar


def save_dataset(records: list[DatasetRecord], sidecar: dict[str, HiddenNoiseRecord],
                 records_path: str, sidecar_path: str):
    with open(records_path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    with open(sidecar_path, "w") as fh:
        for eid, h in sidecar.items():
            fh.write(json.dumps({"episode_id": eid, "noise": h.noise.to_dict()}) + "\n")


def load_dataset(records_path: str, sidecar_path: str | None = None):
    records = []
    with open(records_path) as fh:
        for line in fh:
            if line.strip():
                records.append(DatasetRecord.from_json(line))
    sidecar: dict[str, HiddenNoiseRecord] = {}
    if sidecar_path is not None:
        with open(sidecar_path) as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    sidecar[d["episode_id"]] = HiddenNoiseRecord(
                        d["episode_id"], ExogenousNoise.from_dict(d["noise"]))
    return records, sidecar


@dataclass
class CandidateStream:
    """Per-record precomputed candidate draws for conformal replays.

    Candidate k in the stream is the k-th CG sample under the record's
    shared base seed; the same stream serves every threshold configuration
    during calibration.
    """

    reports: list[TokenSequence]
    report_texts: list[str]
    kpis: list[KpiSeries]
    qualities: np.ndarray  # [k_max]
    sim: np.ndarray  # [k_max, k_max] pairwise ROUGE-L
    admissible: np.ndarray  # [k_max] uint8, vs the record's true report
    k_star: int  # 1-based first admissible index; 0 when none

    @property
    def k_max(self) -> int:
        return len(self.reports)


class CounterfactualGenerator:
    """CG engine with per-episode caching of abduction pools and rollouts."""

    def __init__(self,
                 twin: FidelityLevel = FidelityLevel(TWIN_FIDELITY),
                 abc: AbcConfig | None = None,
                 predictive_top: int = 32,
                 temperature_quantile: float = 0.1):
        self.twin = twin
        self.abc = abc if abc is not None else AbcConfig(fidelity=twin)
        self.predictive_top = predictive_top
        self.temperature_quantile = temperature_quantile
        self._pools: dict[str, AbcPosterior] = {}
        self._cf_runs: dict[tuple, KpiSeries] = {}
        self._streams: dict[tuple, CandidateStream] = {}
        self._contexts: dict[tuple, ReportContext] = {}

    # -- abduction ---------------------------------------------------------

    def pool(self, episode: Episode) -> AbcPosterior:
        cached = self._pools.get(episode.episode_id)
        if cached is None:
            rng = _rng(_stable_seed(episode.episode_id), 11)
            cached = AbcPosterior.build(episode.action, episode.kpis, self.abc, rng)
            spread = float(np.quantile(cached.distances, self.temperature_quantile)
                           - cached.distances.min())
            cached = cached.reweight(max(spread, 1e-6))
            self._pools[episode.episode_id] = cached
        return cached

    # -- counterfactual rollouts --------------------------------------------

    def replay_action(self, episode: Episode, cf_prompt: PromptSpec) -> tuple[TokenSequence, ActionConfig]:
        seq, _, config = decode_action(cf_prompt, episode.action_trace, None)
        return seq, config

    def _cf_kpis(self, episode: Episode, cf_config: ActionConfig,
                 pool_idx: int) -> KpiSeries:
        key = (episode.episode_id, cf_config, pool_idx)
        cached = self._cf_runs.get(key)
        if cached is None:
            noise = self.pool(episode).candidates[pool_idx]
            cached = counterfactual_feedback(episode, cf_config, noise, self.twin)
            self._cf_runs[key] = cached
        return cached

    def quality_context(self, episode: Episode, cf_config: ActionConfig) -> ReportContext:
        """Posterior-predictive report context for quality scoring."""
        key = (episode.episode_id, cf_config)
        cached = self._contexts.get(key)
        if cached is None:
            pool = self.pool(episode)
            top = pool.top_indices(self.predictive_top)
            summaries = [ReportSummary.from_kpis(self._cf_kpis(episode, cf_config, int(j)))
                         for j in top]
            weights = [float(pool.weights[int(j)]) for j in top]
            cached = ReportContext.from_summaries(cf_config, summaries, weights)
            self._contexts[key] = cached
        return cached

    def point(self, episode: Episode, cf_prompt: PromptSpec,
              rng: np.random.Generator) -> CgResult:
        """Single CG draw through the cached pool."""
        action_seq, cf_config = self.replay_action(episode, cf_prompt)
        idx = self.pool(episode).draw_index(rng)
        kpis_hat = self._cf_kpis(episode, cf_config, idx)
        report_seq, _ = decode_report(cf_config, kpis_hat, episode.report_trace, None)
        return CgResult(action_seq, cf_config, kpis_hat, report_seq,
                        textmetrics.render_report_text(report_seq))

    def quality_score(self, episode: Episode, cf_prompt: PromptSpec,
                      candidate: TokenSequence) -> float:
        _, cf_config = self.replay_action(episode, cf_prompt)
        return textmetrics.quality_score(self.quality_context(episode, cf_config), candidate)

    # -- candidate streams ---------------------------------------------------

    def candidate_stream(self, record: DatasetRecord, k_max: int) -> CandidateStream:
        key = (record.record_id, k_max, self.twin.level)
        cached = self._streams.get(key)
        if cached is not None:
            return cached
        episode = record.episode
        _, cf_config = self.replay_action(episode, record.cf_prompt)
        pool = self.pool(episode)
        ctx = self.quality_context(episode, cf_config)

        reports: list[TokenSequence] = []
        texts: list[str] = []
        kpis_list: list[KpiSeries] = []
        qualities = np.zeros(k_max)
        for k in range(k_max):
            draw_rng = _rng(record.stream_seed, k)
            idx = pool.draw_index(draw_rng)
            kp = self._cf_kpis(episode, cf_config, idx)
            seq, _ = decode_report(cf_config, kp, episode.report_trace, None)
            reports.append(seq)
            texts.append(textmetrics.render_report_text(seq))
            kpis_list.append(kp)
            qualities[k] = textmetrics.quality_score(ctx, seq)

        sim = np.zeros((k_max, k_max))
        for a in range(k_max):
            for b in range(a):
                if reports[a].indices == reports[b].indices:
                    val = 1.0
                else:
                    val = textmetrics.rouge_l(reports[a], reports[b])
                sim[a, b] = sim[b, a] = val
            sim[a, a] = 1.0

        adm = np.zeros(k_max, dtype=np.uint8)
        for k in range(k_max):
            adm[k] = textmetrics.admission(reports[k], record.true_report_seq)
        nz = np.nonzero(adm)[0]
        stream = CandidateStream(
            reports=reports,
            report_texts=texts,
            kpis=kpis_list,
            qualities=qualities,
            sim=sim,
            admissible=adm,
            k_star=int(nz[0]) + 1 if nz.size else 0,
        )
        self._streams[key] = stream
        return stream


def _stable_seed(text: str) -> int:
    h = 2166136261
    for ch in text.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h
