"""Congestion-epoch model of a drop-tail queue whose limit follows an
idle/busy integrator, fed by a population of AIMD flows.

Between congestion events k and k+1 the limit moves by Q(k+1) = Q(k) +
a*T_I(k) - b*T_B(k). Taking expectations over the flow backoffs gives the
linear recursion E[Q(k+1)] = lambda*E[Q(k)] + gamma*E[B]*T_T implemented
here, together with its stability test, fixed point, utilization bounds
and an event-level Monte-Carlo oracle.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from model.config import ModelConfig
from model.errors import AnalysisError, ConfigError

logger = logging.getLogger(__name__)

PRACTICAL_ALPHA_T = 5.0


@dataclass
class FlowEnsemble:
    rtts: List[float]
    alphas: Optional[List[float]] = None
    betas: List[float] = field(default_factory=lambda: [0.5])
    backoff_prob: float = 1.0
    beta_spread: float = 0.0

    def __post_init__(self):
        if not self.rtts or any(t <= 0 for t in self.rtts):
            raise ConfigError("model.rtts", "need at least one positive RTT")
        if self.alphas is None:
            self.alphas = [1.0 / t for t in self.rtts]
        if len(self.betas) == 1:
            self.betas = self.betas * len(self.rtts)
        if len(self.alphas) != self.n or len(self.betas) != self.n:
            raise ConfigError("model.betas", "alphas and betas must match the number of RTTs")
        if any(not 0 < b <= 1 for b in self.betas):
            raise ConfigError("model.betas", "every beta must lie in (0, 1]")
        if not 0 <= self.backoff_prob <= 1:
            raise ConfigError("model.backoff_prob", "must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.rtts)

    def rate_weights(self) -> np.ndarray:
        """Send-rate weights of equal-cwnd flows, normalized."""
        inv = 1.0 / np.asarray(self.rtts)
        return inv / inv.sum()

    def expected_beta_t(self) -> float:
        betas = np.asarray(self.betas)
        per_flow = self.backoff_prob * betas + (1.0 - self.backoff_prob)
        return float(np.dot(self.rate_weights(), per_flow))


@dataclass(frozen=True)
class ModelParams:
    a: float
    b: float
    service_rate: float
    alpha_t: float
    a_t: float
    t_t: float
    beta_t: float = 0.5
    delta: float = 0.0
    p_e: float = 1.0

    def __post_init__(self):
        if self.alpha_t <= 0 or self.a_t <= 0:
            raise ConfigError("model.rtts", "alpha_T and A_T must be positive")
        if not 0 <= self.delta < 1:
            raise ConfigError("model.delta", f"must lie in [0, 1), got {self.delta}")
        if not 0 <= self.p_e <= 1:
            raise ConfigError("model.p_e", f"must lie in [0, 1], got {self.p_e}")

    @classmethod
    def from_ensemble(cls, ens: FlowEnsemble, a: float, b: float, service_rate: float,
                      delta: float = 0.0, p_e: float = 1.0) -> "ModelParams":
        alpha_t, a_t, t_t = ensemble_derive(ens)
        return cls(a, b, service_rate, alpha_t, a_t, t_t, ens.expected_beta_t(), delta, p_e)

    @property
    def rtt_ratio(self) -> float:
        """alpha_T / (A_T * T_T), 1 for identical RTTs and never below 1/n."""
        return self.alpha_t / (self.a_t * self.t_t)

    @property
    def bdp(self) -> float:
        return self.service_rate * self.t_t


@dataclass
class OracleResult:
    paths: np.ndarray
    p_e: np.ndarray
    delta: np.ndarray
    beta_t: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.paths.mean(axis=0)


def ensemble_derive(ens: FlowEnsemble) -> Tuple[float, float, float]:
    rtts = np.asarray(ens.rtts, dtype=float)
    alphas = np.asarray(ens.alphas, dtype=float)
    alpha_t = float(alphas.sum())
    a_t = float((alphas / rtts).sum())
    t_t = float(ens.n / (1.0 / rtts).sum())
    return alpha_t, a_t, t_t


def lambda_gamma(mp: ModelParams) -> Tuple[float, float, float]:
    denom = mp.alpha_t + mp.b
    lambda_e = (mp.alpha_t - mp.a * mp.beta_t * mp.rtt_ratio) / denom
    lambda_f = (mp.alpha_t + mp.b * mp.delta) / denom
    gamma_e = mp.a * (1 - mp.beta_t) / denom * mp.rtt_ratio
    return lambda_e, lambda_f, gamma_e


def is_stable(mp: ModelParams) -> Tuple[bool, float]:
    margin = 2 * mp.alpha_t + mp.b - mp.a
    return margin > 0, margin


def practical_rule(mp: ModelParams) -> bool:
    """a < 10 + b, the sufficient condition once alpha_T is at least 5 packets/s."""
    return mp.a < 2 * PRACTICAL_ALPHA_T + mp.b


def _b_over_a(mp: ModelParams) -> float:
    if mp.a == 0:
        raise AnalysisError("b/a is undefined for a = 0")
    return mp.b / mp.a


def fixed_point(mp: ModelParams) -> float:
    denom = _b_over_a(mp) + mp.beta_t
    if denom == 0:
        raise AnalysisError("fixed point undefined: b/a + beta_T = 0")
    return (1 - mp.beta_t) / denom * mp.bdp


def utilization_bounds(mp: ModelParams) -> Tuple[float, float]:
    ratio = _b_over_a(mp)
    return 1 / (1 + ratio * mp.rtt_ratio), 1 / (1 + ratio)


def convergence_rate(mp: ModelParams) -> float:
    lambda_e, lambda_f, _ = lambda_gamma(mp)
    return abs(mp.p_e * lambda_e + (1 - mp.p_e) * lambda_f)


def recursion_trajectory(mp: ModelParams, q0: float, k_max: int) -> np.ndarray:
    if q0 < 0:
        raise ConfigError("model.q0", "must not be negative")
    lambda_e, lambda_f, gamma_e = lambda_gamma(mp)
    lam = mp.p_e * lambda_e + (1 - mp.p_e) * lambda_f
    gamma = mp.p_e * gamma_e
    out = np.empty(k_max + 1)
    out[0] = q0
    for k in range(k_max):
        out[k + 1] = max(0.0, lam * out[k] + gamma * mp.bdp)
    return out


def _draw_betas(ens: FlowEnsemble, rng: np.random.Generator, paths: int) -> np.ndarray:
    betas = np.broadcast_to(np.asarray(ens.betas), (paths, ens.n))
    if ens.beta_spread > 0:
        betas = betas + rng.uniform(-ens.beta_spread, ens.beta_spread, size=(paths, ens.n))
    betas = np.clip(betas, 1e-9, 1.0)
    if ens.backoff_prob < 1:
        backs_off = rng.random((paths, ens.n)) < ens.backoff_prob
        betas = np.where(backs_off, betas, 1.0)
    return betas


def epoch_oracle(ens: FlowEnsemble, mp: ModelParams, q0: float, k_max: int,
                 rng: np.random.Generator, paths: int = 10_000) -> OracleResult:
    """Monte-Carlo of the un-averaged event recursion.

    Per path and event, flow backoffs are drawn independently of Q(k). When
    the post-backoff send rate falls below the service rate the queue
    drains and idles for T_I; otherwise T_I = 0 and the residual occupancy
    is what the busy time refills from.
    """
    weights = ens.rate_weights()
    bdp = mp.bdp
    q = np.full(paths, float(q0))
    out = np.empty((paths, k_max + 1))
    out[:, 0] = q
    p_e = np.empty(k_max)
    delta_mean = np.empty(k_max)
    beta_mean = np.empty(k_max)
    for k in range(k_max):
        beta_t = _draw_betas(ens, rng, paths) @ weights
        drains = beta_t * q < (1 - beta_t) * bdp
        t_i = ((1 - beta_t) * mp.service_rate - beta_t * q / mp.t_t) / mp.a_t
        q_drain = (q + mp.a * np.maximum(t_i, 0.0)) * mp.alpha_t / (mp.alpha_t + mp.b)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.where(q > 0, (beta_t * q - (1 - beta_t) * bdp) / q, 0.0)
        delta = np.where(drains, 0.0, np.clip(delta, 0.0, 1.0))
        q_busy = q * (mp.alpha_t + mp.b * delta) / (mp.alpha_t + mp.b)
        q = np.maximum(np.where(drains, q_drain, q_busy), 0.0)
        out[:, k + 1] = q
        p_e[k] = drains.mean()
        delta_mean[k] = delta[~drains].mean() if (~drains).any() else 0.0
        beta_mean[k] = beta_t.mean()
    return OracleResult(out, p_e, delta_mean, beta_mean)


def harmonic_gap(rtts: Sequence[float], service_rate: float, q: float) -> float:
    """Relative error of replacing the occupancy-weighted mean of 1/T_i by 1/T_T.

    Flows carry equal windows, sized so that their aggregate throughput
    equals the service rate with `q` packets queued.
    """
    rtts = np.asarray(rtts, dtype=float)
    weights = 1.0 / (service_rate * rtts + q)
    weights = weights / weights.sum()
    exact = float(np.dot(weights, 1.0 / rtts))
    t_t = len(rtts) / float((1.0 / rtts).sum())
    return abs(exact * t_t - 1.0)


def model_from_config(cfg: ModelConfig) -> Tuple[FlowEnsemble, ModelParams]:
    m = cfg.model
    ens = FlowEnsemble(list(m.rtts), betas=list(m.betas), backoff_prob=m.backoff_prob,
                       beta_spread=m.beta_spread)
    mp = ModelParams.from_ensemble(ens, m.a, m.b, m.service_rate, m.delta, m.p_e)
    return ens, mp
