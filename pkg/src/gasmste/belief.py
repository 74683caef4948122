"""Hybrid-state multi-source belief and its SIR particle filter.

A particle holds a variable number of source terms ``(x, y, Q)``. The
particle set stores them padded to ``m_max`` rows so the filter can work on
whole arrays; rows at or beyond a particle's cardinality are NaN.

Transition per particle, in priority order:

* merge: two sources closer than ``merge_dist`` fuse at their
  rate-weighted centroid (deterministic);
* removal: the weakest source is dropped when its rate is below
  ``min_rate`` and more than one source exists (deterministic);
* otherwise a birth / death / survive jump drawn from the tri-diagonal
  cardinality matrix (one uniform draw).

Surviving sources then diffuse with independent Gaussian noise and a born
source is drawn from the uniform-location, Gamma-rate prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .plume import Domain, EnvParams, Measurement, SensorModel, unit_concentration

MERGE, REMOVAL, BIRTH, DEATH, SURVIVE = "merge", "removal", "birth", "death", "survive"
EVENTS = (MERGE, REMOVAL, BIRTH, DEATH, SURVIVE)
_EVENT_CODE = {name: i for i, name in enumerate(EVENTS)}

_MAX_RATE_REDRAWS = 100


class DegenerateBeliefError(RuntimeError):
    """Every particle received zero likelihood."""


@dataclass(frozen=True)
class CardinalityKernel:
    m_max: int
    birth_prob: float = 0.08
    death_prob: float = 0.08
    merge_dist: float = 2.0
    min_rate: float = 0.5

    def __post_init__(self):
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if self.birth_prob < 0 or self.death_prob < 0:
            raise ValueError("birth/death probabilities must be >= 0")
        if self.birth_prob + self.death_prob > 1:
            raise ValueError("birth_prob + death_prob must be <= 1")

    @property
    def survive_prob(self) -> float:
        return 1.0 - self.birth_prob - self.death_prob

    @property
    def transition_matrix(self) -> np.ndarray:
        """Row ``m-1`` gives P(M' | M = m)."""
        n, pb, pd = self.m_max, self.birth_prob, self.death_prob
        pi = np.zeros((n, n))
        if n == 1:
            pi[0, 0] = 1.0
            return pi
        for i in range(n):
            if i > 0:
                pi[i, i - 1] = pd
            if i < n - 1:
                pi[i, i + 1] = pb
            pi[i, i] = 1.0 - pi[i].sum()
        return pi


@dataclass(frozen=True)
class DiffusionNoise:
    sigma_x: float = 0.5
    sigma_y: float = 0.5
    sigma_q: float = 0.5

    def __post_init__(self):
        if min(self.sigma_x, self.sigma_y, self.sigma_q) < 0:
            raise ValueError("diffusion std-devs must be non-negative")

    @property
    def scales(self) -> np.ndarray:
        return np.array([self.sigma_x, self.sigma_y, self.sigma_q])


@dataclass(frozen=True)
class BirthPrior:
    region: Domain
    gamma_shape: float = 2.0
    gamma_scale: float = 5.0

    def __post_init__(self):
        if self.gamma_shape <= 0 or self.gamma_scale <= 0:
            raise ValueError("gamma parameters must be > 0")

    @property
    def mean_rate(self) -> float:
        return self.gamma_shape * self.gamma_scale

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        r = self.region
        xy = rng.uniform(r.lower, r.upper, size=(size, 2))
        q = rng.gamma(self.gamma_shape, self.gamma_scale, size=size)
        return np.column_stack([xy, q])


@dataclass(frozen=True)
class FilterParams:
    n_particles: int
    resample_threshold: float | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        thr = self.threshold
        if not 0 < thr <= self.n_particles:
            raise ValueError("resample_threshold must lie in (0, n_particles]")

    @property
    def threshold(self) -> float:
        if self.resample_threshold is None:
            return self.n_particles / 2
        return self.resample_threshold


@dataclass
class HybridParticle:
    components: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float).reshape(-1, 3)

    @property
    def cardinality(self) -> int:
        return len(self.components)


@dataclass
class ParticleSet:
    states: np.ndarray
    card: np.ndarray
    weights: np.ndarray
    m_max: int = field(default=0)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.card = np.asarray(self.card, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.m_max == 0:
            self.m_max = self.states.shape[1]

    def __len__(self):
        return len(self.weights)

    @property
    def active(self) -> np.ndarray:
        """Boolean mask (N, m_max) of populated component rows."""
        return np.arange(self.m_max)[None, :] < self.card[:, None]

    def particle(self, i: int) -> HybridParticle:
        return HybridParticle(self.states[i, : self.card[i]].copy(), float(self.weights[i]))

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.states.copy(), self.card.copy(), self.weights.copy(), self.m_max)

    @classmethod
    def from_particles(cls, particles: Sequence[HybridParticle], m_max: int,
                       normalize: bool = True) -> "ParticleSet":
        n = len(particles)
        states = np.full((n, m_max, 3), np.nan)
        card = np.zeros(n, dtype=np.int64)
        w = np.zeros(n)
        for i, p in enumerate(particles):
            if not 1 <= p.cardinality <= m_max:
                raise ValueError(f"particle {i} has cardinality {p.cardinality} outside [1, {m_max}]")
            states[i, : p.cardinality] = p.components
            card[i] = p.cardinality
            w[i] = p.weight
        if normalize:
            w = w / w.sum()
        return cls(states, card, w, m_max)


def initial_belief(n_particles: int, m_max: int, prior: BirthPrior,
                   rng: np.random.Generator) -> ParticleSet:
    """Uniform cardinality, each source drawn from ``prior``, equal weights."""
    card = rng.integers(1, m_max + 1, size=n_particles)
    states = prior.sample(rng, n_particles * m_max).reshape(n_particles, m_max, 3)
    states[np.arange(m_max)[None, :] >= card[:, None]] = np.nan
    return ParticleSet(states, card, np.full(n_particles, 1.0 / n_particles), m_max)


# --------------------------------------------------------------------------
# cardinality transition


def _closest_pair(components: np.ndarray):
    best, pair = math.inf, None
    for i, j in combinations(range(len(components)), 2):
        d = math.hypot(*(components[i, :2] - components[j, :2]))
        if d < best:
            best, pair = d, (i, j)
    return best, pair


def predict_cardinality(particle: HybridParticle, kernel: CardinalityKernel,
                        rng: np.random.Generator) -> tuple[int, str]:
    comps = particle.components
    m = len(comps)
    if m >= 2:
        dmin, _ = _closest_pair(comps)
        if dmin < kernel.merge_dist:
            return m - 1, MERGE
        if comps[:, 2].min() < kernel.min_rate:
            return m - 1, REMOVAL
    row = kernel.transition_matrix[m - 1]
    u = rng.random()
    new_m = int(np.searchsorted(np.cumsum(row), u, side="right")) + 1
    new_m = min(max(new_m, 1), kernel.m_max)
    if new_m > m:
        return new_m, BIRTH
    if new_m < m:
        return new_m, DEATH
    return new_m, SURVIVE


def merge_reduce(components: np.ndarray) -> np.ndarray:
    """Fuse the closest pair at its rate-weighted centroid.

    The fused source takes the lower index of the pair; the other row is
    dropped and later rows shift up.
    """
    comps = np.asarray(components, dtype=float)
    if len(comps) < 2:
        raise ValueError("merge needs at least two components")
    _, (i, j) = _closest_pair(comps)
    qi, qj = comps[i, 2], comps[j, 2]
    fused = np.empty(3)
    fused[:2] = (qi * comps[i, :2] + qj * comps[j, :2]) / (qi + qj)
    fused[2] = qi + qj
    out = np.delete(comps, j, axis=0)
    out[i] = fused
    return out


def removal_reduce(components: np.ndarray) -> np.ndarray:
    """Drop the weakest source; ties go to the lowest index."""
    comps = np.asarray(components, dtype=float)
    if len(comps) < 2:
        raise ValueError("removal needs at least two components")
    return np.delete(comps, int(np.argmin(comps[:, 2])), axis=0)


def _diffuse_rates(q_old, sigma_q, rng, min_rate):
    q = q_old + sigma_q * rng.standard_normal(q_old.shape)
    bad = q <= 0
    tries = 0
    while np.any(bad) and tries < _MAX_RATE_REDRAWS:
        q[bad] = q_old[bad] + sigma_q * rng.standard_normal(int(bad.sum()))
        bad = q <= 0
        tries += 1
    q[bad] = min_rate
    return q


def propagate_continuous(particle: HybridParticle, event: str, noise: DiffusionNoise,
                         birth: BirthPrior, rng: np.random.Generator,
                         domain: Domain | None = None, min_rate: float = 0.5) -> HybridParticle:
    """Draw the next source set given the cardinality event."""
    domain = domain or birth.region
    comps = particle.components.copy()
    if event == MERGE:
        comps = merge_reduce(comps)
    elif event == REMOVAL:
        comps = removal_reduce(comps)
    elif event == DEATH:
        comps = np.delete(comps, int(rng.integers(len(comps))), axis=0)
    elif event not in (BIRTH, SURVIVE):
        raise ValueError(f"unknown event {event!r}")
    if len(comps):
        xy = comps[:, :2] + noise.scales[:2] * rng.standard_normal((len(comps), 2))
        comps[:, :2] = domain.reflect(xy)
        comps[:, 2] = _diffuse_rates(comps[:, 2], noise.sigma_q, rng, min_rate)
    if event == BIRTH:
        comps = np.vstack([comps, birth.sample(rng, 1)])
    return HybridParticle(comps, particle.weight)


def _predict_batch(belief: ParticleSet, kernel: CardinalityKernel, rng):
    """Vectorised cardinality step; RNG use matches a loop of ``predict_cardinality``."""
    s, card = belief.states, belief.card
    n, m_max = len(card), belief.m_max
    events = np.full(n, _EVENT_CODE[SURVIVE])
    deterministic = np.zeros(n, dtype=bool)
    pair_idx = np.zeros(n, dtype=np.int64)
    if m_max >= 2:
        pairs = list(combinations(range(m_max), 2))
        pi_, pj_ = np.array(pairs).T
        d = np.hypot(s[:, pi_, 0] - s[:, pj_, 0], s[:, pi_, 1] - s[:, pj_, 1])
        valid = pj_[None, :] < card[:, None]
        d = np.where(valid, d, np.inf)
        pair_idx = np.argmin(d, axis=1)
        merge = d[np.arange(n), pair_idx] < kernel.merge_dist
        q = np.where(belief.active, s[:, :, 2], np.inf)
        removal = ~merge & (card > 1) & (q.min(axis=1) < kernel.min_rate)
        events[merge] = _EVENT_CODE[MERGE]
        events[removal] = _EVENT_CODE[REMOVAL]
        deterministic = merge | removal
    new_card = card.copy()
    new_card[deterministic] -= 1
    stoch = np.flatnonzero(~deterministic)
    u = rng.random(stoch.size)
    cum = np.cumsum(kernel.transition_matrix, axis=1)
    rows = cum[card[stoch] - 1]
    drawn = (u[:, None] >= rows).sum(axis=1) + 1
    drawn = np.clip(drawn, 1, kernel.m_max)
    old = card[stoch]
    events[stoch] = np.where(drawn > old, _EVENT_CODE[BIRTH],
                             np.where(drawn < old, _EVENT_CODE[DEATH], _EVENT_CODE[SURVIVE]))
    new_card[stoch] = drawn
    return new_card, events, pair_idx


def _drop_row(states, rows, cols):
    """Remove component ``cols[k]`` from particle ``rows[k]`` by shifting later rows up."""
    m_max = states.shape[1]
    for c in range(m_max - 1):
        shift = cols <= c
        states[rows[shift], c] = states[rows[shift], c + 1]
    states[rows, m_max - 1] = np.nan


def propagate_batch(belief: ParticleSet, kernel: CardinalityKernel, noise: DiffusionNoise,
                    birth: BirthPrior, rng: np.random.Generator,
                    domain: Domain | None = None) -> tuple[ParticleSet, np.ndarray]:
    """Bootstrap proposal for every particle. Returns the set and event codes."""
    domain = domain or birth.region
    new_card, events, pair_idx = _predict_batch(belief, kernel, rng)
    s = belief.states.copy()
    n, m_max = len(new_card), belief.m_max

    merge = np.flatnonzero(events == _EVENT_CODE[MERGE])
    if merge.size:
        pairs = np.array(list(combinations(range(m_max), 2)))
        i, j = pairs[pair_idx[merge]].T
        si, sj = s[merge, i], s[merge, j]
        qi, qj = si[:, 2:3], sj[:, 2:3]
        fused = np.column_stack([(qi * si[:, :2] + qj * sj[:, :2]) / (qi + qj), qi + qj])
        s[merge, i] = fused
        _drop_row(s, merge, j)

    removal = np.flatnonzero(events == _EVENT_CODE[REMOVAL])
    if removal.size:
        q = np.where(belief.active[removal], s[removal, :, 2], np.inf)
        _drop_row(s, removal, np.argmin(q, axis=1))

    death = np.flatnonzero(events == _EVENT_CODE[DEATH])
    if death.size:
        victims = rng.integers(0, belief.card[death])
        _drop_row(s, death, victims)

    born = events == _EVENT_CODE[BIRTH]
    survivors = new_card - born.astype(np.int64)
    alive = np.arange(m_max)[None, :] < survivors[:, None]
    eps = rng.standard_normal((n, m_max, 3))
    xy = s[:, :, :2] + noise.scales[:2] * eps[:, :, :2]
    s[:, :, :2] = np.where(alive[..., None], domain.reflect(np.nan_to_num(xy)), np.nan)
    q_old = s[:, :, 2][alive]
    q = q_old + noise.sigma_q * eps[:, :, 2][alive]
    bad = q <= 0
    tries = 0
    while np.any(bad) and tries < _MAX_RATE_REDRAWS:
        q[bad] = q_old[bad] + noise.sigma_q * rng.standard_normal(int(bad.sum()))
        bad = q <= 0
        tries += 1
    q[bad] = kernel.min_rate
    rates = s[:, :, 2]
    rates[alive] = q
    rates[~alive] = np.nan

    b = np.flatnonzero(born)
    if b.size:
        s[b, survivors[b]] = birth.sample(rng, b.size)
    return ParticleSet(s, new_card, belief.weights.copy(), m_max), events


# --------------------------------------------------------------------------
# measurement update


def predicted_concentrations(states: np.ndarray, card: np.ndarray, positions: np.ndarray,
                             env: EnvParams) -> np.ndarray:
    """Superposed concentration of every particle at every sensor, shape (N, n_sensors)."""
    m_max = states.shape[1]
    active = np.arange(m_max)[None, :] < card[:, None]
    xy = np.where(active[..., None], states[..., :2], 0.0)
    unit = unit_concentration(xy[:, :, None, :], positions[None, None, :, :], env)
    rates = np.where(active, states[..., 2], 0.0)
    return np.einsum("nm,nms->ns", rates, unit)


def _log_single(z, c, sensor: SensorModel):
    sig = sensor.noise_std
    det = z >= sensor.threshold
    log_det = -0.5 * ((z - c) / sig) ** 2 - math.log(math.sqrt(2 * math.pi) * sig)
    tail = 0.5 * sensor.detect_prob * erfc((sensor.threshold - c) / (math.sqrt(2) * sig))
    with np.errstate(divide="ignore"):
        log_miss = np.log1p(-tail)
    return np.where(det, log_det, log_miss)


def single_sensor_likelihood(z: Measurement, components, env: EnvParams,
                             sensor: SensorModel) -> float:
    comps = np.asarray(components, dtype=float).reshape(-1, 3)
    c = predicted_concentrations(comps[None], np.array([len(comps)]),
                                 np.array([[z.x, z.y]]), env)[0, 0]
    return float(np.exp(_log_single(z.value, c, sensor)))


def log_likelihoods(belief: ParticleSet, measurements: Sequence[Measurement],
                    env: EnvParams, sensor: SensorModel) -> np.ndarray:
    positions = np.array([[m.x, m.y] for m in measurements])
    z = np.array([m.value for m in measurements])
    c = predicted_concentrations(belief.states, belief.card, positions, env)
    return _log_single(z[None, :], c, sensor).sum(axis=1)


def joint_likelihood(measurements: Sequence[Measurement], particle: HybridParticle,
                     env: EnvParams, sensor: SensorModel) -> float:
    ps = ParticleSet.from_particles([particle], len(particle.components), normalize=False)
    return float(np.exp(log_likelihoods(ps, measurements, env, sensor)[0]))


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w * w)


def systematic_indices(weights, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """``n`` ancestor indices (default ``len(weights)``) from one uniform offset."""
    w = np.asarray(weights, dtype=float)
    n = len(w) if n is None else n
    cum = np.cumsum(w)
    cum[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cum, u, side="right"), len(w) - 1)


def systematic_resample(belief: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    idx = systematic_indices(belief.weights, rng)
    n = len(idx)
    return ParticleSet(belief.states[idx].copy(), belief.card[idx].copy(),
                       np.full(n, 1.0 / n), belief.m_max)


def reweight(belief: ParticleSet, loglik: np.ndarray) -> ParticleSet:
    """Multiply weights by ``exp(loglik)`` and normalise in log space."""
    with np.errstate(divide="ignore"):
        logw = np.log(belief.weights) + loglik
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateBeliefError("all particle likelihoods are zero")
    w = np.exp(logw - top)
    w /= w.sum()
    return ParticleSet(belief.states, belief.card, w, belief.m_max)


def pf_step(belief: ParticleSet, measurements: Sequence[Measurement], kernel: CardinalityKernel,
            noise: DiffusionNoise, birth: BirthPrior, env: EnvParams, sensor: SensorModel,
            params: FilterParams, rng: np.random.Generator,
            domain: Domain | None = None) -> ParticleSet:
    """One SIR update: propagate, weight by the joint likelihood, maybe resample."""
    if not measurements:
        raise ValueError("pf_step needs at least one measurement")
    predicted, _ = propagate_batch(belief, kernel, noise, birth, rng, domain)
    updated = reweight(predicted, log_likelihoods(predicted, measurements, env, sensor))
    if effective_sample_size(updated.weights) < params.threshold:
        updated = systematic_resample(updated, rng)
    return updated
