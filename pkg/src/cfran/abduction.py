"""Exogenous-noise inference from a factual (action, KPI) pair.

Two routes: an amortized feed-forward posterior over the shadowing vector
(trained on simulator triplets by maximum likelihood, with the discrete
seeds falling back to the prior) and a likelihood-free rejection/softmin
sampler that proposes full noise candidates from the prior and weights
them by KPI distance under the twin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from cfran.envsim import (
    MAX_UES,
    SEED_RANGE,
    SHADOW_STD_DB,
    TWIN_FIDELITY,
    ActionConfig,
    ExogenousNoise,
    FidelityLevel,
    KpiSeries,
    run_environment,
    sample_exogenous_prior,
)
from cfran.errors import InvalidArgumentError, TrainingDivergedError
from cfran.vocab import DUR_VALUES, LOAD_VALUES, SCHEDULERS, UE_VALUES

FEATURE_DIM = 4 * MAX_UES + 5
HIDDEN = 128
MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SummaryFeatures:
    """Fixed-dimension conditioning digest of an (action, KPI) pair."""

    thr_mean: np.ndarray  # [MAX_UES], zero-padded
    thr_std: np.ndarray
    delay_mean: np.ndarray
    delay_std: np.ndarray
    config_enc: np.ndarray  # [5] scheduler one-hot + scaled ues/load/dur

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.thr_mean, self.thr_std, self.delay_mean, self.delay_std, self.config_enc]
        )


def summarize_pair(action: ActionConfig, kpis: KpiSeries) -> SummaryFeatures:
    expected = int(action.duration_s / 0.2 + 1e-9)
    if kpis.n_windows != expected:
        raise InvalidArgumentError(
            f"KPI length {kpis.n_windows} inconsistent with duration {action.duration_s}"
        )
    if kpis.n_ues != action.num_ues:
        raise InvalidArgumentError("UE count mismatch between KPIs and action")
    n = action.num_ues

    def pad(a: np.ndarray) -> np.ndarray:
        out = np.zeros(MAX_UES)
        out[:n] = a
        return out

    enc = np.array(
        [
            1.0 if action.scheduler == "RR" else 0.0,
            1.0 if action.scheduler == "PF" else 0.0,
            (action.num_ues - 3) / 7.0,
            (action.load_mbps - 2.0) / 8.0,
            (action.duration_s - 5.0) / 5.0,
        ]
    )
    return SummaryFeatures(
        thr_mean=pad(kpis.throughput_mbps.mean(axis=0)),
        thr_std=pad(kpis.throughput_mbps.std(axis=0)),
        delay_mean=pad(kpis.delay_ms.mean(axis=0)),
        delay_std=pad(kpis.delay_ms.std(axis=0)),
        config_enc=enc,
    )


def _scale_inputs(x: np.ndarray) -> np.ndarray:
    """Squash raw KPI statistics to O(1) ranges for the network."""
    out = x.copy()
    out[:, 0:10] /= 10.0
    out[:, 10:20] /= 10.0
    out[:, 20:30] = np.log10(1.0 + np.maximum(out[:, 20:30], 0.0)) / 4.0
    out[:, 30:40] = np.log10(1.0 + np.maximum(out[:, 30:40], 0.0)) / 4.0
    return out


@dataclass
class PosteriorModel:
    """Three-hidden-layer ReLU network mapping features to a diagonal
    Gaussian over the shadowing vector."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss_history: list[float] = field(default_factory=list)

    @classmethod
    def init(cls, rng: np.random.Generator) -> "PosteriorModel":
        dims = [FEATURE_DIM, HIDDEN, HIDDEN, HIDDEN, 2 * MAX_UES]
        weights, biases = [], []
        for din, dout in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (din + dout))
            weights.append(rng.uniform(-limit, limit, size=(din, dout)))
            biases.append(np.zeros(dout))
        return cls(weights, biases)

    def _forward(self, x: np.ndarray):
        h = _scale_inputs(x)
        acts = [h]
        for layer in range(3):
            h = h @ self.weights[layer] + self.biases[layer]
            h = np.maximum(h, 0.0)
            acts.append(h)
        z = h @ self.weights[3] + self.biases[3]
        return z[:, :MAX_UES], z[:, MAX_UES:], acts

    def predict(self, features: SummaryFeatures) -> tuple[np.ndarray, np.ndarray]:
        mu, logstd, _ = self._forward(features.vector()[None, :])
        return mu[0], np.exp(logstd[0])

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean Gaussian NLL and its gradients w.r.t. all parameters."""
        B = x.shape[0]
        mu, logstd, acts = self._forward(x)
        inv_var = np.exp(-2.0 * logstd)
        err = y - mu
        nll = 0.5 * err * err * inv_var + logstd + 0.5 * math.log(2.0 * math.pi)
        loss = float(nll.sum(axis=1).mean())

        dmu = -err * inv_var / B
        dlogstd = (1.0 - err * err * inv_var) / B
        dz = np.concatenate([dmu, dlogstd], axis=1)
        grads_w = [None] * 4
        grads_b = [None] * 4
        grads_w[3] = acts[3].T @ dz
        grads_b[3] = dz.sum(axis=0)
        dh = dz @ self.weights[3].T
        for layer in (2, 1, 0):
            dh = dh * (acts[layer + 1] > 0.0)
            grads_w[layer] = acts[layer].T @ dh
            grads_b[layer] = dh.sum(axis=0)
            if layer > 0:
                dh = dh @ self.weights[layer].T
        return loss, grads_w, grads_b

    def save(self, path: str):
        np.savez(
            path,
            schema_version=np.array([MODEL_SCHEMA_VERSION]),
            loss_history=np.asarray(self.loss_history),
            **{f"w{i}": w for i, w in enumerate(self.weights)},
            **{f"b{i}": b for i, b in enumerate(self.biases)},
        )

    @classmethod
    def load(cls, path: str) -> "PosteriorModel":
        data = np.load(path)
        if int(data["schema_version"][0]) != MODEL_SCHEMA_VERSION:
            raise InvalidArgumentError("unsupported posterior model version")
        return cls(
            weights=[data[f"w{i}"] for i in range(4)],
            biases=[data[f"b{i}"] for i in range(4)],
            loss_history=list(data["loss_history"]),
        )


@dataclass(frozen=True)
class TrainingTriplet:
    action: ActionConfig
    kpis: KpiSeries
    noise: ExogenousNoise

    def to_json(self) -> str:
        return json.dumps(
            {
                "action": vars(self.action),
                "kpis": self.kpis.to_dict(),
                "noise": self.noise.to_dict(),
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "TrainingTriplet":
        d = json.loads(line)
        return cls(
            action=ActionConfig(**d["action"]),
            kpis=KpiSeries.from_dict(d["kpis"]),
            noise=ExogenousNoise.from_dict(d["noise"]),
        )


def sample_action_prior(rng: np.random.Generator) -> ActionConfig:
    """Uniform draw over the configuration grid."""
    return ActionConfig(
        scheduler=SCHEDULERS[int(rng.integers(len(SCHEDULERS)))],
        num_ues=int(UE_VALUES[int(rng.integers(len(UE_VALUES)))]),
        load_mbps=float(LOAD_VALUES[int(rng.integers(len(LOAD_VALUES)))]),
        duration_s=float(DUR_VALUES[int(rng.integers(len(DUR_VALUES)))]),
    )


def generate_training_triplets(
    n: int, rng: np.random.Generator,
    fidelity: FidelityLevel = FidelityLevel(TWIN_FIDELITY),
) -> list[TrainingTriplet]:
    if n < 1:
        raise InvalidArgumentError("need n >= 1 triplets")
    out = []
    for _ in range(n):
        action = sample_action_prior(rng)
        noise = sample_exogenous_prior(rng)
        kpis = run_environment(action, noise, fidelity)
        out.append(TrainingTriplet(action, kpis, noise))
    return out


def train_amortized_posterior(
    data: list[TrainingTriplet],
    epochs: int = 50,
    lr: float = 1e-3,
    batch_size: int = 64,
    momentum: float = 0.9,
    rng: np.random.Generator | None = None,
) -> PosteriorModel:
    """SGD-with-momentum maximum-likelihood fit of the shadow posterior."""
    if not data:
        raise InvalidArgumentError("empty training set")
    rng = rng or np.random.default_rng(0)
    x = np.stack([summarize_pair(t.action, t.kpis).vector() for t in data])
    y = np.stack([t.noise.shadow_db for t in data])
    model = PosteriorModel.init(rng)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, gw, gb = model.loss_and_grads(x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss}")
            epoch_loss += loss
            batches += 1
            for layer in range(4):
                vel_w[layer] = momentum * vel_w[layer] - lr * gw[layer]
                vel_b[layer] = momentum * vel_b[layer] - lr * gb[layer]
                model.weights[layer] += vel_w[layer]
                model.biases[layer] += vel_b[layer]
        model.loss_history.append(epoch_loss / batches)
    return model


def gradient_check(model: PosteriorModel, x: np.ndarray, y: np.ndarray,
                   n_params: int, rng: np.random.Generator,
                   step: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients."""
    _, gw, gb = model.loss_and_grads(x, y)
    worst = 0.0
    for _ in range(n_params):
        layer = int(rng.integers(4))
        if rng.random() < 0.8:
            arr, grad = model.weights[layer], gw[layer]
        else:
            arr, grad = model.biases[layer], gb[layer]
        flat = int(rng.integers(arr.size))
        pos = np.unravel_index(flat, arr.shape)
        orig = arr[pos]
        arr[pos] = orig + step
        lp, _, _ = model.loss_and_grads(x, y)
        arr[pos] = orig - step
        lm, _, _ = model.loss_and_grads(x, y)
        arr[pos] = orig
        numeric = (lp - lm) / (2.0 * step)
        analytic = grad[pos]
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, rel)
    return worst


def posterior_sample(model: PosteriorModel, action: ActionConfig,
                     kpis: KpiSeries, rng: np.random.Generator,
                     std_scale: float = 1.0) -> ExogenousNoise:
    """Draw noise from the amortized posterior (seeds from the prior).

    std_scale=0 is a test hook collapsing the Gaussian onto its mean.
    """
    mu, std = model.predict(summarize_pair(action, kpis))
    placement = int(rng.integers(0, SEED_RANGE))
    fading = int(rng.integers(0, SEED_RANGE))
    traffic = int(rng.integers(0, SEED_RANGE))
    shadow = mu + std_scale * std * rng.normal(size=MAX_UES)
    return ExogenousNoise(placement, shadow, fading, traffic)


@dataclass(frozen=True)
class AbcConfig:
    n_candidates: int = 256
    temperature: float | None = None  # None: median candidate distance
    fidelity: FidelityLevel = FidelityLevel(TWIN_FIDELITY)

    def __post_init__(self):
        if self.n_candidates < 1:
            raise InvalidArgumentError("need at least one ABC candidate")
        if self.temperature is not None and self.temperature < 0:
            raise InvalidArgumentError("temperature must be >= 0")


@dataclass
class AbcPosterior:
    """Prior candidates with softmin weights against an observed KPI pair.

    Building the pool costs n_candidates twin runs; afterwards any number
    of posterior draws are cheap, and the pool doubles as the posterior-
    predictive sample for downstream scoring.
    """

    candidates: list[ExogenousNoise]
    kpis: list[KpiSeries]
    distances: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, action: ActionConfig, observed: KpiSeries, cfg: AbcConfig,
              rng: np.random.Generator) -> "AbcPosterior":
        cands = [sample_exogenous_prior(rng) for _ in range(cfg.n_candidates)]
        sims = [run_environment(action, c, cfg.fidelity) for c in cands]
        thr_obs = observed.throughput_mbps
        dly_obs = observed.delay_ms
        thr_err = np.array([np.abs(s.throughput_mbps - thr_obs).mean() for s in sims])
        dly_err = np.array([np.abs(s.delay_ms - dly_obs).mean() for s in sims])
        thr_scale = max(float(np.std([s.throughput_mbps for s in sims])), 1e-9)
        dly_scale = max(float(np.std([s.delay_ms for s in sims])), 1e-9)
        dist = thr_err / thr_scale + dly_err / dly_scale
        temp = cfg.temperature
        if temp is None:
            temp = float(np.median(dist))
        if temp <= 1e-12:
            weights = np.where(dist == dist.min(), 1.0, 0.0)
        else:
            weights = np.exp(-(dist - dist.min()) / temp)
        weights = weights / weights.sum()
        return cls(cands, sims, dist, weights)

    def reweight(self, temperature: float) -> "AbcPosterior":
        """Same pool under a different softmin temperature."""
        if temperature <= 1e-12:
            weights = np.where(self.distances == self.distances.min(), 1.0, 0.0)
        else:
            weights = np.exp(-(self.distances - self.distances.min()) / temperature)
        return AbcPosterior(self.candidates, self.kpis, self.distances,
                            weights / weights.sum())

    def draw_index(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.candidates), p=self.weights))

    def draw(self, rng: np.random.Generator) -> ExogenousNoise:
        return self.candidates[self.draw_index(rng)]

    def top_indices(self, k: int) -> np.ndarray:
        order = np.argsort(-self.weights, kind="stable")
        return order[: min(k, len(self.candidates))]


def abc_posterior_sample(action: ActionConfig, kpis: KpiSeries, cfg: AbcConfig,
                         rng: np.random.Generator) -> ExogenousNoise:
    """One likelihood-free posterior draw (fresh pool each call)."""
    return AbcPosterior.build(action, kpis, cfg, rng).draw(rng)
