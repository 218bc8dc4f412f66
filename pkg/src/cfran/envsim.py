"""Single-cell downlink scheduler simulator.

The same engine provides the "real" environment (fidelity level 4: full
stochastic channel with packet-level queueing) and the degraded digital
twin (levels 1-3: averaged or partially averaged channel with fluid-flow
queues).  Everything is a deterministic function of (config, noise,
fidelity); randomness enters only through the seeds and shadowing vector
carried by :class:`ExogenousNoise`.

Channel constants follow common macro-cell defaults: log-distance path
loss 128.1 + 37.6 log10(d/km) dB, 30 dBm over 50 resource blocks of
180 kHz, -174 dBm/Hz thermal noise with a 7 dB noise figure, spectral
efficiency capped at 7.4 bit/s/Hz.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from cfran import kernels
from cfran.errors import InvalidArgumentError

TTI_S = 1e-3
WINDOW_S = 0.2
WINDOW_TTIS = 200

N_RB = 100
RB_HZ = 180e3
BW_HZ = N_RB * RB_HZ
TX_POWER_DBM = 30.0
NOISE_DBM_PER_HZ = -174.0
NOISE_FIGURE_DB = 7.0
SE_CAP = 7.4
CELL_RADIUS_M = (10.0, 300.0)
SHADOW_STD_DB = 8.0
FADING_BLOCK_TTIS = 10
PACKET_BITS = 1500 * 8
PF_EWMA_TTIS = 100
PF_EWMA_INIT_BPS = 1e3
MAX_UES = 10
SEED_RANGE = 2**31

REAL_FIDELITY = 4
TWIN_FIDELITY = 2

IDLE = -1

NOISE_FLOOR_DBM = NOISE_DBM_PER_HZ + NOISE_FIGURE_DB + 10.0 * np.log10(BW_HZ)


@dataclass(frozen=True)
class ActionConfig:
    scheduler: str
    num_ues: int
    load_mbps: float
    duration_s: float

    def validate(self):
        if self.scheduler not in ("RR", "PF"):
            raise InvalidArgumentError(f"unknown scheduler {self.scheduler!r}")
        if not (3 <= self.num_ues <= MAX_UES):
            raise InvalidArgumentError(f"num_ues {self.num_ues} outside [3, {MAX_UES}]")
        if not (2.0 <= self.load_mbps <= 10.0):
            raise InvalidArgumentError(f"load {self.load_mbps} outside [2, 10] Mbps")
        if not (5.0 <= self.duration_s <= 10.0):
            raise InvalidArgumentError(f"duration {self.duration_s} outside [5, 10] s")
        return self


@dataclass(frozen=True)
class ExogenousNoise:
    placement_seed: int
    shadow_db: np.ndarray
    fading_seed: int
    traffic_seed: int

    def __post_init__(self):
        shadow = np.asarray(self.shadow_db, dtype=float)
        if shadow.shape != (MAX_UES,):
            raise InvalidArgumentError(f"shadow_db must have length {MAX_UES}")
        object.__setattr__(self, "shadow_db", shadow)

    def to_dict(self) -> dict:
        return {
            "placement_seed": int(self.placement_seed),
            "shadow_db": [float(x) for x in self.shadow_db],
            "fading_seed": int(self.fading_seed),
            "traffic_seed": int(self.traffic_seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExogenousNoise":
        return cls(
            placement_seed=int(d["placement_seed"]),
            shadow_db=np.asarray(d["shadow_db"], dtype=float),
            fading_seed=int(d["fading_seed"]),
            traffic_seed=int(d["traffic_seed"]),
        )


@dataclass(frozen=True)
class FidelityLevel:
    level: int

    def __post_init__(self):
        if self.level not in (1, 2, 3, 4):
            raise InvalidArgumentError(f"fidelity level {self.level} outside 1..4")

    @property
    def has_shadowing(self) -> bool:
        return self.level >= 2

    @property
    def has_fast_fading(self) -> bool:
        return self.level >= 3

    @property
    def has_packet_queueing(self) -> bool:
        return self.level >= 4


@dataclass
class KpiSeries:
    """Per-UE KPI time series on 0.2 s windows."""

    sample_period_s: float
    throughput_mbps: np.ndarray  # [windows, ues]
    delay_ms: np.ndarray  # [windows, ues]
    delivered_bits: np.ndarray  # [windows, ues]

    @property
    def n_windows(self) -> int:
        return self.throughput_mbps.shape[0]

    @property
    def n_ues(self) -> int:
        return self.throughput_mbps.shape[1]

    def ue_mean_throughput(self) -> np.ndarray:
        return self.throughput_mbps.mean(axis=1)

    def ue_mean_delay(self) -> np.ndarray:
        return self.delay_ms.mean(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("window_index,ue,throughput_mbps,delay_ms\n")
        for w in range(self.n_windows):
            for u in range(self.n_ues):
                buf.write(
                    f"{w},{u},{self.throughput_mbps[w, u]:.10g},{self.delay_ms[w, u]:.10g}\n"
                )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "sample_period_s": self.sample_period_s,
            "throughput_mbps": self.throughput_mbps.tolist(),
            "delay_ms": self.delay_ms.tolist(),
            "delivered_bits": self.delivered_bits.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KpiSeries":
        return cls(
            sample_period_s=float(d["sample_period_s"]),
            throughput_mbps=np.asarray(d["throughput_mbps"], dtype=float),
            delay_ms=np.asarray(d["delay_ms"], dtype=float),
            delivered_bits=np.asarray(d["delivered_bits"], dtype=float),
        )


@dataclass
class SchedulerState:
    """Scheduler bookkeeping exposed for the selection contract."""

    backlog_bits: np.ndarray
    ewma_bps: np.ndarray
    last_served: int = field(default=-1)
    tti: int = 0


def scheduler_select(state: SchedulerState, inst_rates, policy: str) -> int:
    """Pick the UE to serve this TTI; IDLE when nothing is backlogged."""
    backlog = np.asarray(state.backlog_bits, dtype=float)
    rates = np.asarray(inst_rates, dtype=float)
    n = backlog.shape[0]
    if policy == "RR":
        for j in range(1, n + 1):
            cand = (state.last_served + j) % n
            if backlog[cand] > 0.0:
                return cand
        return IDLE
    if policy == "PF":
        best = IDLE
        best_metric = -np.inf
        for i in range(n):
            if backlog[i] > 0.0:
                metric = rates[i] / state.ewma_bps[i]
                if metric > best_metric:
                    best_metric = metric
                    best = i
        return best
    raise InvalidArgumentError(f"unknown policy {policy!r}")


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def sample_exogenous_prior(rng: np.random.Generator) -> ExogenousNoise:
    """Draw environment noise from the prior (uniform seeds, N(0,8dB) shadow)."""
    placement = int(rng.integers(0, SEED_RANGE))
    fading = int(rng.integers(0, SEED_RANGE))
    traffic = int(rng.integers(0, SEED_RANGE))
    shadow = rng.normal(0.0, SHADOW_STD_DB, size=MAX_UES)
    return ExogenousNoise(placement, shadow, fading, traffic)


def ue_distances(placement_seed: int) -> np.ndarray:
    """Distances for all MAX_UES slots, uniform over the annulus area.

    Always drawing the full vector keeps a given UE's position stable when
    only the UE count changes between two runs with the same noise.
    """
    rng = _stream(placement_seed)
    r0, r1 = CELL_RADIUS_M
    u = rng.random(MAX_UES)
    return np.sqrt(r0 * r0 + u * (r1 * r1 - r0 * r0))


def _pathloss_db(d_m: np.ndarray) -> np.ndarray:
    return 128.1 + 37.6 * np.log10(d_m / 1000.0)


def link_snr_linear(config: ActionConfig, noise: ExogenousNoise,
                    fidelity: FidelityLevel) -> np.ndarray:
    """Large-scale (pre-fading) linear SNR per active UE."""
    n = config.num_ues
    d = ue_distances(noise.placement_seed)[:n]
    snr_db = TX_POWER_DBM - _pathloss_db(d) - NOISE_FLOOR_DBM
    if fidelity.has_shadowing:
        snr_db = snr_db + noise.shadow_db[:n]
    return 10.0 ** (snr_db / 10.0)


def _rate_table(config: ActionConfig, noise: ExogenousNoise,
                fidelity: FidelityLevel, n_ttis: int,
                force_mean_fading: bool) -> np.ndarray:
    """Servable bits per TTI for every (TTI, UE)."""
    n = config.num_ues
    snr = link_snr_linear(config, noise, fidelity)
    if fidelity.has_fast_fading and not force_mean_fading:
        n_blocks = (n_ttis + FADING_BLOCK_TTIS - 1) // FADING_BLOCK_TTIS
        gains = np.empty((n_blocks, n))
        for i in range(n):
            gains[:, i] = _stream(noise.fading_seed, i).exponential(1.0, size=n_blocks)
        se = np.minimum(SE_CAP, np.log2(1.0 + snr[None, :] * gains))
        rates = np.repeat(se, FADING_BLOCK_TTIS, axis=0)[:n_ttis]
    else:
        se = np.minimum(SE_CAP, np.log2(1.0 + snr))
        rates = np.broadcast_to(se, (n_ttis, n)).copy()
    return np.ascontiguousarray(rates * (BW_HZ * TTI_S))


def _arrival_times(load_mbps: float, traffic_seed: int, ue: int,
                   duration_s: float) -> np.ndarray:
    """Poisson packet arrival instants for one UE, cut at the duration.

    Inter-arrival draws come from a per-UE stream so a longer run extends
    (never reshuffles) a shorter one.
    """
    rate = load_mbps * 1e6 / PACKET_BITS  # packets per second
    rng = _stream(traffic_seed, ue)
    expected = int(rate * duration_s)
    chunk = expected + int(6 * np.sqrt(expected + 1)) + 64
    gaps = rng.exponential(1.0 / rate, size=chunk)
    times = np.cumsum(gaps)
    while times[-1] < duration_s:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        times = np.concatenate([times, times[-1] + np.cumsum(gaps)])
    return times[times < duration_s]


def run_environment(config: ActionConfig, noise: ExogenousNoise,
                    fidelity: FidelityLevel, *, force_mean_fading: bool = False,
                    _unchecked: bool = False) -> KpiSeries:
    """Simulate one episode and aggregate KPIs on 0.2 s windows.

    ``force_mean_fading`` is a test hook that pins fast-fading gains to
    their unit mean (used by the fidelity-nesting checks).
    """
    if not _unchecked:
        config.validate()
    n = config.num_ues
    if not (1 <= n <= MAX_UES):
        raise InvalidArgumentError(f"num_ues {n} unusable even unchecked")

    n_ttis = int(round(config.duration_s / TTI_S))
    n_windows = int(config.duration_s / WINDOW_S + 1e-9)
    if n_windows < 1:
        raise InvalidArgumentError("duration shorter than one KPI window")

    rates = _rate_table(config, noise, fidelity, n_ttis, force_mean_fading)
    ewma_beta = 1.0 / PF_EWMA_TTIS
    sched = kernels.SCHED_RR if config.scheduler == "RR" else kernels.SCHED_PF

    if fidelity.has_packet_queueing:
        per_ue = [
            _arrival_times(config.load_mbps, noise.traffic_seed, i, config.duration_s)
            for i in range(n)
        ]
        offsets = np.zeros(n + 1, dtype=np.int64)
        for i, arr in enumerate(per_ue):
            offsets[i + 1] = offsets[i] + arr.shape[0]
        flat = np.concatenate(per_ue) if per_ue else np.zeros(0)
        delivered, backlog_sum, delay_sum, delay_cnt = kernels.packet_kernel(
            rates, flat, offsets, float(PACKET_BITS), sched, ewma_beta,
            PF_EWMA_INIT_BPS, WINDOW_TTIS, n_windows,
        )
        delay_ms = np.zeros((n_windows, n))
        for i in range(n):
            prev = 0.0
            for w in range(n_windows):
                if delay_cnt[w, i] > 0:
                    prev = delay_sum[w, i] / delay_cnt[w, i] * 1e3
                delay_ms[w, i] = prev
    else:
        arrivals = np.full(n, config.load_mbps * 1e6 * TTI_S)
        # packetized-contention eligibility; a lone UE serves continuously
        threshold = float(PACKET_BITS) if n >= 2 else 0.0
        delivered, backlog_sum = kernels.fluid_kernel(
            rates, arrivals, sched, ewma_beta, PF_EWMA_INIT_BPS,
            WINDOW_TTIS, n_windows, threshold,
        )
        # sojourn estimate: drain the sampled backlog at the window's served
        # rate, plus one packet's transmission time at the servable rate
        rate_win = rates[: n_windows * WINDOW_TTIS].reshape(n_windows, WINDOW_TTIS, n)
        inst_bps = rate_win.mean(axis=1) * 1e3
        delay_ms = np.zeros((n_windows, n))
        for i in range(n):
            prev = 0.0
            for w in range(n_windows):
                if delivered[w, i] > 0:
                    mu = delivered[w, i] / WINDOW_S
                    qbar = backlog_sum[w, i] / WINDOW_TTIS
                    prev = (qbar / mu + PACKET_BITS / inst_bps[w, i]) * 1e3
                delay_ms[w, i] = prev

    throughput = delivered / WINDOW_S / 1e6
    return KpiSeries(
        sample_period_s=WINDOW_S,
        throughput_mbps=throughput,
        delay_ms=delay_ms,
        delivered_bits=delivered,
    )
