"""Seeded, parallelizable Monte Carlo engines for every experiment family.

Trials are partitioned into fixed-size chunks; chunk c draws from a generator
seeded by (base_seed, c), so reruns are bit-identical no matter how many
workers execute the chunks or in which order.  Inside a chunk, trials advance
in lockstep as numpy arrays, with finished trials compacted away.

Ratio-type metrics (variance ratios, consensus coefficients) get their
standard errors from fixed sub-groups of trials; everything that is a plain
per-trial average gets the exact sample standard error.  Truncated trials are
counted separately and never folded into means.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .consensus import WeightMode
from .detectors import SequentialDetector
from .network import NetworkTopology, sample_gossip_matrix
from .stats import Gaussian, HypothesisModel, llr_nonlinearity

CHUNK_SIZE = 2500
GROUP_SIZE = 50


@dataclass(frozen=True)
class Estimate:
    value: float
    std_err: float
    count: int
    truncated_count: int = 0

    def __post_init__(self) -> None:
        if self.std_err < 0.0:
            raise ValueError("std_err must be nonnegative")

    @staticmethod
    def from_samples(samples: np.ndarray, truncated: int = 0) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n == 0:
            return Estimate(float("nan"), 0.0, 0, truncated)
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return Estimate(float(samples.mean()), se, n, truncated)

    @staticmethod
    def from_bernoulli(successes: int, count: int, truncated: int = 0) -> "Estimate":
        if count == 0:
            return Estimate(float("nan"), 0.0, 0, truncated)
        p = successes / count
        return Estimate(p, math.sqrt(p * (1.0 - p) / count), count, truncated)


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """Deterministic substream for one chunk of trials."""
    return np.random.default_rng((seed, chunk_index))


def _chunk_plan(trials: int) -> list[tuple[int, int]]:
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    plan = []
    index = 0
    remaining = trials
    while remaining > 0:
        size = min(CHUNK_SIZE, remaining)
        plan.append((index, size))
        index += 1
        remaining -= size
    return plan


def _run_chunks(trials: int, seed: int, threads: int, worker):
    """Run worker(chunk_index, size, rng) over all chunks; ordered results."""
    plan = _chunk_plan(trials)
    results = [None] * len(plan)

    def run_one(slot: int) -> None:
        index, size = plan[slot]
        results[slot] = worker(index, size, chunk_rng(seed, index))

    if threads <= 1 or len(plan) == 1:
        for slot in range(len(plan)):
            run_one(slot)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_one, range(len(plan))))
    return results


def _gossip_batch(states: np.ndarray, pair_array: np.ndarray, idx: np.ndarray) -> None:
    """Apply per-trial sequences of pairwise averages in place.

    states has shape (B, M); idx has shape (B, v) and indexes pair_array.
    Column k is applied before column k+1, matching apply_pair_sequence.
    """
    rows = np.arange(states.shape[0])
    for k in range(idx.shape[1]):
        chosen = pair_array[idx[:, k]]
        i = chosen[:, 0]
        j = chosen[:, 1]
        mean = 0.5 * (states[rows, i] + states[rows, j])
        states[rows, i] = mean
        states[rows, j] = mean


def _advance_state(
    states: np.ndarray,
    t: np.ndarray,
    n: int,
    mode: WeightMode,
    include_new_sample: bool,
    pair_array: np.ndarray,
    idx: np.ndarray | None,
) -> np.ndarray:
    """One lockstep consensus slot for a batch of trials."""
    M = states.shape[1]
    if mode is WeightMode.AVERAGING:
        alpha, beta = (n - 1) / n, 1.0 / n
    else:
        alpha, beta = 1.0, float(M)
    if include_new_sample:
        mixed = alpha * states + beta * t
        if idx is not None:
            _gossip_batch(mixed, pair_array, idx)
        return mixed
    if idx is not None:
        _gossip_batch(states, pair_array, idx)
    return alpha * states + beta * t


# ---------------------------------------------------------------------------
# Covariance of the state vector and the consensus metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovarianceStudy:
    n: np.ndarray
    covariance: np.ndarray  # pooled (n_max, M, M)
    gamma_est: np.ndarray
    gamma_se: np.ndarray
    rho_est: np.ndarray
    rho_se: np.ndarray
    trials: int


def estimate_covariance(
    topology: NetworkTopology,
    v: int,
    n_max: int,
    trials: int,
    seed: int,
    *,
    mode: WeightMode = WeightMode.AVERAGING,
    include_new_sample: bool = False,
    dist: Gaussian | None = None,
    sigma2: float | None = None,
    known_mean: float = 0.0,
    threads: int = 1,
) -> CovarianceStudy:
    """Sample covariance of the state across trials at every slot.

    States are centered by the known mean rather than the sample mean, which
    matches the zero-mean experimental setup and removes a bias term.  The
    per-slot summaries average gamma over nodes and rho over admissible pairs.
    """
    if trials < 2:
        raise ValueError(f"covariance estimation needs >= 2 trials, got {trials}")
    dist = dist if dist is not None else Gaussian(0.0, 1.0)
    sigma2 = sigma2 if sigma2 is not None else dist.variance
    M = topology.M
    pair_array = topology.pair_array
    J = len(topology.pairs)

    def worker(chunk_index: int, size: int, rng: np.random.Generator):
        # group size shrinks with small chunks so several groups back the
        # standard errors even at tiny trial counts
        group = max(2, min(GROUP_SIZE, size // 10)) if size >= 4 else size
        n_groups = math.ceil(size / group)
        sums = np.zeros((n_groups, n_max, M, M))
        bounds = [(g * group, min((g + 1) * group, size)) for g in range(n_groups)]
        states = np.zeros((size, M))
        for n in range(1, n_max + 1):
            idx = rng.integers(0, J, size=(size, v)) if (M > 1 and v > 0) else None
            x = dist.sample(rng, (size, M))
            states = _advance_state(states, x, n, mode, include_new_sample, pair_array, idx)
            if mode is WeightMode.AVERAGING:
                center = known_mean
            else:
                center = n * M * known_mean
            centered = states - center
            for g, (lo, hi) in enumerate(bounds):
                block = centered[lo:hi]
                sums[g, n - 1] += block.T @ block
        sizes = np.array([hi - lo for lo, hi in bounds], dtype=float)
        return sums, sizes

    results = _run_chunks(trials, seed, threads, worker)
    group_sums = np.concatenate([r[0] for r in results], axis=0)
    group_sizes = np.concatenate([r[1] for r in results], axis=0)

    slots = np.arange(1, n_max + 1, dtype=float)
    sigma2_n = sigma2 / (slots * M)

    group_cov = group_sums / group_sizes[:, None, None, None]
    diag = np.einsum("gnii->gni", group_cov)
    gamma_groups = diag.mean(axis=2) / sigma2_n[None, :]

    pi = pair_array[:, 0]
    pj = pair_array[:, 1]
    cij = group_cov[:, :, pi, pj]
    cii = diag[:, :, pi]
    cjj = diag[:, :, pj]
    rho_groups = (2.0 * cij / (cii + cjj)).mean(axis=2)

    n_groups = group_sizes.size
    gamma_est = gamma_groups.mean(axis=0)
    rho_est = rho_groups.mean(axis=0)
    if n_groups > 1:
        gamma_se = gamma_groups.std(axis=0, ddof=1) / math.sqrt(n_groups)
        rho_se = rho_groups.std(axis=0, ddof=1) / math.sqrt(n_groups)
    else:
        gamma_se = np.zeros_like(gamma_est)
        rho_se = np.zeros_like(rho_est)

    pooled = group_sums.sum(axis=0) / trials
    return CovarianceStudy(
        n=slots.astype(int),
        covariance=pooled,
        gamma_est=gamma_est,
        gamma_se=gamma_se,
        rho_est=rho_est,
        rho_se=rho_se,
        trials=trials,
    )


# ---------------------------------------------------------------------------
# Consensus error moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorMomentStudy:
    slots: np.ndarray
    second_moment: list[Estimate]  # per requested slot, pooled over nodes
    third_abs_moment: list[Estimate]


def estimate_error_moments(
    topology: NetworkTopology,
    v: int,
    slots,
    trials: int,
    seed: int,
    *,
    dist: Gaussian | None = None,
    threads: int = 1,
) -> ErrorMomentStudy:
    """Empirical E[e^2] and E[|e|^3] of the accumulating-schedule error."""
    dist = dist if dist is not None else Gaussian(0.0, 1.0)
    slots = np.asarray(sorted(slots), dtype=int)
    n_max = int(slots.max())
    M = topology.M
    pair_array = topology.pair_array
    J = len(topology.pairs)

    def worker(chunk_index: int, size: int, rng: np.random.Generator):
        states = np.zeros((size, M))
        csum = np.zeros(size)
        out2 = np.zeros((slots.size, size))
        out3 = np.zeros((slots.size, size))
        pos = 0
        for n in range(1, n_max + 1):
            idx = rng.integers(0, J, size=(size, v)) if (M > 1 and v > 0) else None
            x = dist.sample(rng, (size, M))
            states = _advance_state(states, x, n, WeightMode.ACCUMULATING, True, pair_array, idx)
            csum += x.sum(axis=1)
            if pos < slots.size and n == slots[pos]:
                err = states - csum[:, None]
                out2[pos] = (err ** 2).mean(axis=1)
                out3[pos] = (np.abs(err) ** 3).mean(axis=1)
                pos += 1
        return out2, out3

    results = _run_chunks(trials, seed, threads, worker)
    second = np.concatenate([r[0] for r in results], axis=1)
    third = np.concatenate([r[1] for r in results], axis=1)
    return ErrorMomentStudy(
        slots=slots,
        second_moment=[Estimate.from_samples(second[k]) for k in range(slots.size)],
        third_abs_moment=[Estimate.from_samples(third[k]) for k in range(slots.size)],
    )


# ---------------------------------------------------------------------------
# Fixed-sample-size detection probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FssStudy:
    threshold: float
    n: int
    p_f: dict[str, Estimate]
    p_d: dict[str, Estimate]


def estimate_error_probabilities(
    model: HypothesisModel,
    nonlinearity,
    topology: NetworkTopology,
    v: int,
    n: int,
    threshold: float,
    trials: int,
    seed: int,
    *,
    node: int = 0,
    threads: int = 1,
    run_null: bool = True,
    run_alt: bool = True,
) -> FssStudy:
    """Empirical false-alarm and detection frequencies at a fixed threshold.

    Within a trial the centralized and node statistics share the same sample
    stream; they are coupled by construction.
    """
    M = topology.M
    pair_array = topology.pair_array
    J = len(topology.pairs)

    def worker(chunk_index: int, size: int, rng: np.random.Generator):
        counts = {}
        for label, dist in (("null", model.null), ("alt", model.alt)):
            if (label == "null" and not run_null) or (label == "alt" and not run_alt):
                continue
            states = np.zeros((size, M))
            csum = np.zeros(size)
            for slot in range(1, n + 1):
                idx = rng.integers(0, J, size=(size, v)) if (M > 1 and v > 0) else None
                x = dist.sample(rng, (size, M))
                t = nonlinearity(x)
                states = _advance_state(states, t, slot, WeightMode.ACCUMULATING, True, pair_array, idx)
                csum += t.sum(axis=1)
            counts[label] = (
                int((csum >= threshold).sum()),
                int((states[:, node] >= threshold).sum()),
            )
        return counts

    results = _run_chunks(trials, seed, threads, worker)
    study_pf: dict[str, Estimate] = {}
    study_pd: dict[str, Estimate] = {}
    for label, out in (("null", study_pf), ("alt", study_pd)):
        if (label == "null" and not run_null) or (label == "alt" and not run_alt):
            continue
        cent = sum(r[label][0] for r in results)
        nod = sum(r[label][1] for r in results)
        out["centralized"] = Estimate.from_bernoulli(cent, trials)
        out["node"] = Estimate.from_bernoulli(nod, trials)
    return FssStudy(threshold=threshold, n=n, p_f=study_pf, p_d=study_pd)


# ---------------------------------------------------------------------------
# Sequential stopping times
# ---------------------------------------------------------------------------

_DEC_NONE, _DEC_H0, _DEC_H1 = 0, 1, 2


@dataclass(frozen=True)
class SequentialOutcome:
    """Per-hypothesis outcome for one statistic source."""

    mean_n: Estimate
    declare_h1: Estimate  # fraction declaring H1 among non-truncated trials


@dataclass(frozen=True)
class SequentialStudy:
    detector: SequentialDetector
    under_null: dict[str, SequentialOutcome]
    under_alt: dict[str, SequentialOutcome]
    node_spread_ratio: Estimate | None = None  # median handled by caller

    def error_probability(self, source: str) -> float:
        """Symmetric error summary (p_f + 1 - p_d)/2 for one source."""
        p_f = self.under_null[source].declare_h1.value
        p_d = self.under_alt[source].declare_h1.value
        return 0.5 * (p_f + (1.0 - p_d))

    def mean_sample_number(self, source: str) -> float:
        """Symmetric average of the expected stopping times."""
        return 0.5 * (self.under_null[source].mean_n.value + self.under_alt[source].mean_n.value)


def estimate_stopping(
    model: HypothesisModel,
    nonlinearity,
    topology: NetworkTopology,
    v: int,
    detector: SequentialDetector,
    trials: int,
    seed: int,
    *,
    max_n: int,
    node: int = 0,
    threads: int = 1,
    track_all_nodes: bool = False,
) -> SequentialStudy:
    """Stopping times and decisions for the two-threshold sequential test.

    Tracks the centralized statistic and one node statistic on the shared
    sample stream; optionally tracks every node to measure how tightly the
    individual stopping times cluster.
    """
    M = topology.M
    pair_array = topology.pair_array
    J = len(topology.pairs)
    eta = detector.eta_r
    a_r, b_r = detector.a_r, detector.b_r
    tracked_nodes = M if track_all_nodes else 1

    def run_one_hypothesis(dist, size: int, rng: np.random.Generator):
        states = np.zeros((size, M))
        csum = np.zeros(size)
        alive = np.arange(size)
        stop_c = np.zeros(size, dtype=np.int64)
        dec_c = np.zeros(size, dtype=np.int8)
        stop_nodes = np.zeros((size, tracked_nodes), dtype=np.int64)
        dec_nodes = np.zeros((size, tracked_nodes), dtype=np.int8)
        slot = 0
        while alive.size and slot < max_n:
            slot += 1
            idx = rng.integers(0, J, size=(alive.size, v)) if (M > 1 and v > 0) else None
            x = dist.sample(rng, (alive.size, M))
            t = nonlinearity(x)
            states_a = _advance_state(states[alive], t, slot, WeightMode.ACCUMULATING, True, pair_array, idx)
            states[alive] = states_a
            csum[alive] += t.sum(axis=1)

            shift = slot * M * eta
            centered_c = csum[alive] - shift
            undecided = dec_c[alive] == _DEC_NONE
            hit_h1 = undecided & (centered_c >= b_r)
            hit_h0 = undecided & (centered_c <= a_r)
            if hit_h1.any() or hit_h0.any():
                ids = alive[hit_h1]
                dec_c[ids] = _DEC_H1
                stop_c[ids] = slot
                ids = alive[hit_h0]
                dec_c[ids] = _DEC_H0
                stop_c[ids] = slot

            node_stats = states_a - shift if track_all_nodes else (states_a[:, node] - shift)[:, None]
            undecided_n = dec_nodes[alive] == _DEC_NONE
            hit_h1_n = undecided_n & (node_stats >= b_r)
            hit_h0_n = undecided_n & (node_stats <= a_r)
            if hit_h1_n.any() or hit_h0_n.any():
                rows, cols = np.nonzero(hit_h1_n)
                dec_nodes[alive[rows], cols] = _DEC_H1
                stop_nodes[alive[rows], cols] = slot
                rows, cols = np.nonzero(hit_h0_n)
                dec_nodes[alive[rows], cols] = _DEC_H0
                stop_nodes[alive[rows], cols] = slot

            done = (dec_c[alive] != _DEC_NONE) & (dec_nodes[alive] != _DEC_NONE).all(axis=1)
            if done.any():
                alive = alive[~done]
        return stop_c, dec_c, stop_nodes, dec_nodes

    def worker(chunk_index: int, size: int, rng: np.random.Generator):
        null_out = run_one_hypothesis(model.null, size, rng)
        alt_out = run_one_hypothesis(model.alt, size, rng)
        return null_out, alt_out

    results = _run_chunks(trials, seed, threads, worker)

    def collect(which: int) -> tuple[dict[str, SequentialOutcome], np.ndarray]:
        stop_c = np.concatenate([r[which][0] for r in results])
        dec_c = np.concatenate([r[which][1] for r in results])
        stop_nodes = np.concatenate([r[which][2] for r in results], axis=0)
        dec_nodes = np.concatenate([r[which][3] for r in results], axis=0)

        outcomes = {}
        ok = dec_c != _DEC_NONE
        outcomes["centralized"] = SequentialOutcome(
            mean_n=Estimate.from_samples(stop_c[ok], truncated=int((~ok).sum())),
            declare_h1=Estimate.from_bernoulli(int((dec_c == _DEC_H1).sum()), int(ok.sum()), int((~ok).sum())),
        )
        first_col = dec_nodes[:, 0]
        ok_n = first_col != _DEC_NONE
        outcomes["node"] = SequentialOutcome(
            mean_n=Estimate.from_samples(stop_nodes[ok_n, 0], truncated=int((~ok_n).sum())),
            declare_h1=Estimate.from_bernoulli(int((first_col == _DEC_H1).sum()), int(ok_n.sum()), int((~ok_n).sum())),
        )
        spread = np.array([])
        if track_all_nodes:
            full = (dec_nodes != _DEC_NONE).all(axis=1)
            if full.any():
                times = stop_nodes[full]
                spans = times.max(axis=1) - times.min(axis=1)
                means = times.mean(axis=1)
                spread = spans / np.maximum(means, 1.0)
        return outcomes, spread

    under_null, _ = collect(0)
    under_alt, spread = collect(1)
    spread_est = Estimate.from_samples(spread) if track_all_nodes and spread.size else None
    return SequentialStudy(
        detector=detector,
        under_null=under_null,
        under_alt=under_alt,
        node_spread_ratio=spread_est,
    )


def node_stopping_spread(
    model: HypothesisModel,
    nonlinearity,
    topology: NetworkTopology,
    v: int,
    detector: SequentialDetector,
    trials: int,
    seed: int,
    *,
    max_n: int,
    threads: int = 1,
) -> np.ndarray:
    """Per-trial relative spread of the per-node stopping times, under H1."""
    M = topology.M
    pair_array = topology.pair_array
    J = len(topology.pairs)
    eta, a_r, b_r = detector.eta_r, detector.a_r, detector.b_r

    def worker(chunk_index: int, size: int, rng: np.random.Generator):
        states = np.zeros((size, M))
        alive = np.arange(size)
        stop_nodes = np.zeros((size, M), dtype=np.int64)
        dec_nodes = np.zeros((size, M), dtype=np.int8)
        slot = 0
        while alive.size and slot < max_n:
            slot += 1
            idx = rng.integers(0, J, size=(alive.size, v)) if (M > 1 and v > 0) else None
            x = model.alt.sample(rng, (alive.size, M))
            t = nonlinearity(x)
            states_a = _advance_state(states[alive], t, slot, WeightMode.ACCUMULATING, True, pair_array, idx)
            states[alive] = states_a
            node_stats = states_a - slot * M * eta
            undecided = dec_nodes[alive] == _DEC_NONE
            for code, hit in ((_DEC_H1, node_stats >= b_r), (_DEC_H0, node_stats <= a_r)):
                rows, cols = np.nonzero(undecided & hit)
                dec_nodes[alive[rows], cols] = code
                stop_nodes[alive[rows], cols] = slot
            done = (dec_nodes[alive] != _DEC_NONE).all(axis=1)
            if done.any():
                alive = alive[~done]
        return stop_nodes, dec_nodes

    results = _run_chunks(trials, seed, threads, worker)
    stops = np.concatenate([r[0] for r in results], axis=0)
    decs = np.concatenate([r[1] for r in results], axis=0)
    full = (decs != _DEC_NONE).all(axis=1)
    times = stops[full]
    if times.size == 0:
        return np.array([])
    return (times.max(axis=1) - times.min(axis=1)) / times.mean(axis=1)


# ---------------------------------------------------------------------------
# CUSUM run lengths (false-alarm intervals and detection delays)
# ---------------------------------------------------------------------------

def _sum_llr_sampler(model: HypothesisModel, under: str, M: int):
    """Sampler of the per-slot summed log-likelihood-ratio increment.

    Zero-mean Gaussian pairs admit an exact sufficient form: the summed
    increment is affine in a chi-square draw with M degrees of freedom.
    Anything else falls back to sampling M raw values per slot.
    """
    dist = model.null if under == "null" else model.alt
    null, alt = model.null, model.alt
    if (
        isinstance(null, Gaussian)
        and isinstance(alt, Gaussian)
        and null.mean == 0.0
        and alt.mean == 0.0
    ):
        a = -0.5 * math.log(alt.variance / null.variance)
        b = 0.5 * (1.0 / null.variance - 1.0 / alt.variance)
        scale = b * dist.variance

        def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
            return M * a + scale * rng.chisquare(float(M), size)

        return sampler

    llr = llr_nonlinearity(model)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return llr(dist.sample(rng, (size, M))).sum(axis=1)

    return sampler


def _per_sensor_llr_sampler(model: HypothesisModel, under: str):
    dist = model.null if under == "null" else model.alt
    null, alt = model.null, model.alt
    if (
        isinstance(null, Gaussian)
        and isinstance(alt, Gaussian)
        and null.mean == 0.0
        and alt.mean == 0.0
    ):
        a = -0.5 * math.log(alt.variance / null.variance)
        b = 0.5 * (1.0 / null.variance - 1.0 / alt.variance)
        scale = b * dist.variance

        def sampler(rng: np.random.Generator, shape) -> np.ndarray:
            return a + scale * rng.chisquare(1.0, shape)

        return sampler

    llr = llr_nonlinearity(model)

    def sampler(rng: np.random.Generator, shape) -> np.ndarray:
        return llr(dist.sample(rng, shape))

    return sampler


def page_run_lengths(
    model: HypothesisModel,
    mode: str,
    gamma: float,
    M: int,
    trials: int,
    seed: int,
    *,
    under: str = "null",
    max_n: int,
    topology: NetworkTopology | None = None,
    v: int = 1,
    node: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """Per-trial first-crossing slots of the reset-at-zero statistic.

    mode is one of "centralized", "single", "bank", "running".  False-alarm
    experiments run entirely under the pre-change law (under="null");
    detection-delay experiments start the statistic at zero at the change
    (under="alt").  A zero entry marks a trial truncated at max_n.
    """
    if mode not in ("centralized", "single", "bank", "running"):
        raise ValueError(f"unknown run-length mode: {mode}")
    if mode == "running" and topology is None:
        raise ValueError("running mode needs a topology")
    if mode == "running":
        M = topology.M

    if mode in ("centralized", "single"):
        eff_m = M if mode == "centralized" else 1
        sampler = _sum_llr_sampler(model, under, eff_m)

        def worker(chunk_index: int, size: int, rng: np.random.Generator):
            cusum = np.zeros(size)
            alive = np.arange(size)
            stop = np.zeros(size, dtype=np.int64)
            slot = 0
            while alive.size and slot < max_n:
                slot += 1
                cusum_a = np.maximum(0.0, cusum[alive] + sampler(rng, alive.size))
                cusum[alive] = cusum_a
                crossed = cusum_a >= gamma
                if crossed.any():
                    stop[alive[crossed]] = slot
                    alive = alive[~crossed]
            return stop

    elif mode == "bank":
        sampler = _per_sensor_llr_sampler(model, under)

        def worker(chunk_index: int, size: int, rng: np.random.Generator):
            cusums = np.zeros((size, M))
            alive = np.arange(size)
            stop = np.zeros(size, dtype=np.int64)
            slot = 0
            while alive.size and slot < max_n:
                slot += 1
                block = np.maximum(0.0, cusums[alive] + sampler(rng, (alive.size, M)))
                cusums[alive] = block
                crossed = (block >= gamma).any(axis=1)
                if crossed.any():
                    stop[alive[crossed]] = slot
                    alive = alive[~crossed]
            return stop

    else:  # running consensus
        sampler = _per_sensor_llr_sampler(model, under)
        pair_array = topology.pair_array
        J = len(topology.pairs)

        def worker(chunk_index: int, size: int, rng: np.random.Generator):
            states = np.zeros((size, M))
            alive = np.arange(size)
            stop = np.zeros(size, dtype=np.int64)
            slot = 0
            while alive.size and slot < max_n:
                slot += 1
                idx = rng.integers(0, J, size=(alive.size, v)) if (M > 1 and v > 0) else None
                updated = states[alive] + M * sampler(rng, (alive.size, M))
                if idx is not None:
                    _gossip_batch(updated, pair_array, idx)
                updated = np.maximum(0.0, updated)
                states[alive] = updated
                crossed = updated[:, node] >= gamma
                if crossed.any():
                    stop[alive[crossed]] = slot
                    alive = alive[~crossed]
            return stop

    results = _run_chunks(trials, seed, threads, worker)
    return np.concatenate(results)


def estimate_page_run_length(
    model: HypothesisModel,
    mode: str,
    gamma: float,
    M: int,
    trials: int,
    seed: int,
    *,
    under: str = "null",
    max_n: int,
    topology: NetworkTopology | None = None,
    v: int = 1,
    node: int = 0,
    threads: int = 1,
) -> Estimate:
    """Mean first-crossing slot; truncated trials counted but excluded."""
    stops = page_run_lengths(
        model, mode, gamma, M, trials, seed,
        under=under, max_n=max_n, topology=topology, v=v, node=node, threads=threads,
    )
    finished = stops > 0
    return Estimate.from_samples(stops[finished], truncated=int((~finished).sum()))


# ---------------------------------------------------------------------------
# Classic probability-ratio sequential test (fusion-center baseline)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SprtStudy:
    under_null: SequentialOutcome
    under_alt: SequentialOutcome

    def error_probability(self) -> float:
        p_f = self.under_null.declare_h1.value
        p_d = self.under_alt.declare_h1.value
        return 0.5 * (p_f + (1.0 - p_d))

    def mean_sample_number(self) -> float:
        return 0.5 * (self.under_null.mean_n.value + self.under_alt.mean_n.value)


def estimate_sprt_stopping(
    model: HypothesisModel,
    M: int,
    p_f: float,
    p_d: float,
    trials: int,
    seed: int,
    *,
    max_n: int,
    threads: int = 1,
) -> SprtStudy:
    """Exact log-likelihood-ratio test with the classic threshold pair.

    The cumulative ratio over all M per-slot samples is compared against
    log(p_d/p_f) above and log((1-p_d)/(1-p_f)) below.
    """
    upper = math.log(p_d / p_f)
    lower = math.log((1.0 - p_d) / (1.0 - p_f))

    def run(under: str, size: int, rng: np.random.Generator):
        sampler = _sum_llr_sampler(model, under, M)
        total = np.zeros(size)
        alive = np.arange(size)
        stop = np.zeros(size, dtype=np.int64)
        dec = np.zeros(size, dtype=np.int8)
        slot = 0
        while alive.size and slot < max_n:
            slot += 1
            total_a = total[alive] + sampler(rng, alive.size)
            total[alive] = total_a
            hit_h1 = total_a >= upper
            hit_h0 = total_a <= lower
            if hit_h1.any() or hit_h0.any():
                ids = alive[hit_h1]
                dec[ids] = _DEC_H1
                stop[ids] = slot
                ids = alive[hit_h0]
                dec[ids] = _DEC_H0
                stop[ids] = slot
                alive = alive[dec[alive] == _DEC_NONE]
        return stop, dec

    def worker(chunk_index: int, size: int, rng: np.random.Generator):
        return run("null", size, rng), run("alt", size, rng)

    results = _run_chunks(trials, seed, threads, worker)

    def collect(which: int) -> SequentialOutcome:
        stop = np.concatenate([r[which][0] for r in results])
        dec = np.concatenate([r[which][1] for r in results])
        ok = dec != _DEC_NONE
        return SequentialOutcome(
            mean_n=Estimate.from_samples(stop[ok], truncated=int((~ok).sum())),
            declare_h1=Estimate.from_bernoulli(int((dec == _DEC_H1).sum()), int(ok.sum()), int((~ok).sum())),
        )

    return SprtStudy(under_null=collect(0), under_alt=collect(1))


# ---------------------------------------------------------------------------
# Sample-based spectral summary for multi-exchange slots
# ---------------------------------------------------------------------------

def estimate_expected_square(
    topology: NetworkTopology, v: int, trials: int, seed: int
) -> np.ndarray:
    """Monte Carlo estimate of E[W W^T] for v pairwise exchanges per slot."""
    rng = chunk_rng(seed, 0)
    M = topology.M
    acc = np.zeros((M, M))
    for _ in range(trials):
        W = sample_gossip_matrix(topology, v, rng)
        acc += W @ W.T
    return acc / trials
