"""Desk-scale experiment drivers: workloads, traces, adversaries, churn.

Everything here is deterministic given its seeds, so a CSV produced by
one run can be regenerated bit-for-bit (wall-clock columns aside).  Key
spaces are kept disjoint by construction: filters fill from the middle
of the 64-bit space, workload universes sit at the bottom, churn
replacements come from the top.  Probe keys therefore never collide
with stored keys and every positive probe is a real false positive.

The instantaneous false-positive rate is measured with adaptation
frozen: the filter is decoded once into a read-only index and probed
with independent query sets drawn from the workload's distribution.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import FrozenIndex
from .errors import InvalidConfigError, StateCorruptionError
from .filter import AdaptiveFilter, LookupResult, Policy
from .hashing import FilterConfig, split_batch
from .setops import bulk_load

_MASK64 = (1 << 64) - 1

# key-space carve-up (inclusive low, exclusive high)
FILL_SPACE = (1 << 32, 1 << 62)
CHURN_SPACE = (1 << 62, 1 << 63)

WORKLOAD_KINDS = ("uniform", "zipfian", "adversarial", "churn")


@dataclass(frozen=True)
class WorkloadSpec:
    """What to query and how much of it.

    kind picks the generator; the remaining fields apply per kind:
    uniform and zipfian draw from [0, universe), zipfian with rank
    frequencies proportional to rank**(-s); adversarial reads warmup
    and adv_frac; churn reads interval_pct and replace_pct on top of
    the zipfian fields.  Percent fields are whole percents.

    seed drives the draws; perm_seed fixes which keys the zipfian ranks
    land on.  Two specs sharing perm_seed (and s, universe) describe
    the same distribution, so probe sets vary seed only; that is what
    lets them see the trace's hot keys.
    """

    kind: str
    count: int
    seed: int = 0
    s: float = 1.5
    universe: int = 10_000_000
    warmup: int = 0
    adv_frac: float = 0.0
    interval_pct: int = 10
    replace_pct: int = 20
    perm_seed: int = 0

    def __post_init__(self):
        if self.kind not in WORKLOAD_KINDS:
            raise InvalidConfigError(f"unknown workload kind {self.kind!r}")
        if self.count < 0:
            raise InvalidConfigError("count cannot be negative")
        if self.universe < 1 or self.universe > FILL_SPACE[0]:
            raise InvalidConfigError(
                f"universe must stay within [1, 2^32], got {self.universe}"
            )
        if self.kind in ("zipfian", "churn") and not self.s > 1:
            raise InvalidConfigError(f"zipf exponent must exceed 1, got {self.s}")
        if not 0.0 <= self.adv_frac <= 1.0:
            raise InvalidConfigError(f"adv_frac {self.adv_frac} outside [0, 1]")
        if self.warmup < 0:
            raise InvalidConfigError("warmup cannot be negative")
        if not 1 <= self.interval_pct <= 100:
            raise InvalidConfigError("interval_pct must be in [1, 100]")
        if not 0 <= self.replace_pct < 100:
            raise InvalidConfigError("replace_pct must be in [0, 100)")


@dataclass(frozen=True)
class TraceRow:
    ops_done: int
    instantaneous_fpr: float
    bits_per_item_extra: float
    map_accesses: int
    wall_nanos: int


@dataclass(frozen=True)
class LatencyModel:
    """Simulated per-query costs, nanoseconds.

    Every query pays base_ns; a positive answer pays hit_ns on top,
    standing in for the backing-store probe a positive would trigger.
    """

    base_ns: int = 1_000
    hit_ns: int = 100_000


@dataclass(frozen=True)
class AdversaryReport:
    warmup_queries: int
    attack_queries: int
    pool_size: int
    realized_fps: int
    realized_fp_rate: float
    positives: int
    effective_qps: float
    degenerate_draws: int
    wall_nanos: int


def _permute(idx: np.ndarray, universe: int, seed: int) -> np.ndarray:
    """Seeded permutation of [0, universe) applied elementwise.

    Four-round Feistel over the smallest even-bit domain covering the
    universe, cycle-walking escapes back into range.  Hot ranks land on
    arbitrary keys instead of small integers, so skew and hash structure
    stay uncorrelated.
    """
    half = max(1, ((universe - 1).bit_length() + 1) // 2)
    hmask = np.uint64((1 << half) - 1)
    rks = [
        np.uint64((seed * 0x9E3779B97F4A7C15 + i * 0xBF58476D1CE4E5B9) & _MASK64)
        for i in range(4)
    ]

    def perm(v):
        left = (v >> np.uint64(half)) & hmask
        right = v & hmask
        for rk in rks:
            t = (right * np.uint64(0x2545F4914F6CDD1D)) ^ rk
            t ^= t >> np.uint64(29)
            left, right = right, left ^ (t & hmask)
        return (left << np.uint64(half)) | right

    out = np.empty(len(idx), dtype=np.uint64)
    pending = np.arange(len(idx))
    cur = idx.astype(np.uint64)
    while pending.size:
        cur = perm(cur)
        ok = cur < universe
        out[pending[ok]] = cur[ok]
        pending = pending[~ok]
        cur = cur[~ok]
    return out


def _zipf_ranks(rng: np.random.Generator, s: float, universe: int, count: int) -> np.ndarray:
    """count draws of 0-based ranks with P(rank) ~ (rank+1)**(-s), truncated."""
    out = []
    got = 0
    while got < count:
        draw = rng.zipf(s, size=max(count - got, 1024))
        draw = draw[draw <= universe]
        out.append(draw)
        got += len(draw)
    ranks = np.concatenate(out)[:count]
    return ranks.astype(np.uint64) - np.uint64(1)


def gen_workload(spec: WorkloadSpec) -> np.ndarray:
    """Deterministic key sequence for the spec, dtype uint64."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind in ("uniform", "adversarial"):
        return rng.integers(0, spec.universe, size=spec.count, dtype=np.uint64)
    ranks = _zipf_ranks(rng, spec.s, spec.universe, spec.count)
    return _permute(ranks, spec.universe, spec.perm_seed ^ 0xD6E8FEB8)


def zipf_normalizer(s: float, universe: int) -> float:
    """Truncated zeta sum(k**-s, k=1..universe) by direct summation."""
    k = np.arange(1, universe + 1, dtype=np.float64)
    return float(np.sum(k**-s))


def fill_to_load(
    cfg: FilterConfig,
    load: float,
    seed: int = 0,
    policy: Policy | None = None,
    value_bits: int = 0,
) -> tuple[AdaptiveFilter, np.ndarray]:
    """Fresh filter at the target load, plus the keys that went in.

    Keys are uniform over the fill space, sorted into hash order, and
    placed in one pass.
    """
    if not 0.0 <= load <= 0.95:
        raise InvalidConfigError(f"load {load} outside [0, 0.95]")
    n_keys = int(load * cfg.nslots)
    rng = np.random.default_rng(seed)
    keys = rng.integers(FILL_SPACE[0], FILL_SPACE[1], size=n_keys, dtype=np.uint64)
    keys = keys[np.argsort(split_batch(keys, cfg), kind="stable")]
    return bulk_load(keys, cfg, policy=policy, value_bits=value_bits), keys


def measure_fpr(index: FrozenIndex, probe_sets: list[np.ndarray]) -> float:
    """Mean false-positive fraction over independent probe sets.

    Probes must be true negatives (the key-space carve-up guarantees
    this for generated workloads), so every positive verdict counts.
    """
    if not probe_sets:
        raise InvalidConfigError("need at least one probe set")
    fracs = [float(np.mean(index.query_keys(p))) for p in probe_sets]
    return sum(fracs) / len(fracs)


def extra_bits_per_item(f: AdaptiveFilter) -> float:
    """Extension-slot bits amortized over stored fingerprints."""
    arr = f.arr
    if arr.fp_count == 0:
        return 0.0
    per_slot = arr.cfg.r + arr.value_bits + 3
    return arr.ext_slot_count * per_slot / arr.fp_count


def make_probe_sets(spec: WorkloadSpec, probe_sets: int, probe_size: int) -> list[np.ndarray]:
    """Independent query sets from the spec's distribution.

    Seeds are derived from the spec's, offset so they never collide
    with the trace stream itself.
    """
    return [
        gen_workload(replace(spec, count=probe_size, seed=spec.seed + 7919 * (i + 1)))
        for i in range(probe_sets)
    ]


def run_adaptation_trace(
    f: AdaptiveFilter,
    workload: WorkloadSpec | np.ndarray,
    measure_every_pct: int = 10,
    probe_sets: int = 20,
    probe_size: int = 100_000,
) -> list[TraceRow]:
    """Adapting query run with frozen-FPR checkpoints.

    Row 0 is the untouched filter; later rows land every
    measure_every_pct of the workload.  A key array in place of a spec
    is treated as an external trace: probe sets become bootstrap
    resamples of it, which only estimate an FPR if the trace keys are
    disjoint from the stored ones.
    """
    if not 1 <= measure_every_pct <= 100:
        raise InvalidConfigError("measure_every_pct must be in [1, 100]")
    if isinstance(workload, WorkloadSpec):
        queries = gen_workload(workload)
        probes = make_probe_sets(workload, probe_sets, probe_size)
    else:
        queries = np.asarray(workload, dtype=np.uint64)
        rng = np.random.default_rng(0x5EED)
        probes = [rng.choice(queries, size=probe_size) for _ in range(probe_sets)]
    t0 = time.perf_counter_ns()

    def checkpoint(done: int) -> TraceRow:
        return TraceRow(
            ops_done=done,
            instantaneous_fpr=measure_fpr(f.frozen_index(), probes),
            bits_per_item_extra=extra_bits_per_item(f),
            map_accesses=f.map_accesses,
            wall_nanos=time.perf_counter_ns() - t0,
        )

    rows = [checkpoint(0)]
    step = max(1, len(queries) * measure_every_pct // 100)
    done = 0
    while done < len(queries):
        stop = min(done + step, len(queries))
        for k in queries[done:stop]:
            f.lookup(int(k))
        done = stop
        rows.append(checkpoint(done))
    return rows


def run_adversary(
    f: AdaptiveFilter,
    warmup: int,
    total: int,
    adv_frac: float,
    latency: LatencyModel | None = None,
    seed: int = 0,
    universe: int = 10_000_000,
) -> AdversaryReport:
    """Replay attack: collect false positives, then feed them back.

    During warmup every query is benign and each false positive joins
    the adversary's pool.  During the attack each query replays a pool
    entry with probability adv_frac.  Against an adapting filter the
    pool is already dead (each entry was corrected the moment it was
    observed); with adaptation off every replay hits.
    """
    if latency is None:
        latency = LatencyModel()
    if not 0.0 <= adv_frac <= 1.0:
        raise InvalidConfigError(f"adv_frac {adv_frac} outside [0, 1]")
    rng = np.random.default_rng(seed)
    benign = rng.integers(0, universe, size=warmup + total, dtype=np.uint64)
    adversarial = rng.random(size=total) < adv_frac
    t0 = time.perf_counter_ns()

    pool: list[int] = []
    positive = (
        LookupResult.PRESENT,
        LookupResult.FALSE_POSITIVE,
        LookupResult.FALSE_POSITIVE_CORRECTED,
    )
    false_pos = positive[1:]
    for i in range(warmup):
        result, _ = f.lookup(int(benign[i]))
        if result in false_pos:
            pool.append(int(benign[i]))

    realized = 0
    positives = 0
    degenerate = 0
    pool_picks = rng.integers(0, max(1, len(pool)), size=total)
    for i in range(total):
        if adversarial[i] and pool:
            key = pool[int(pool_picks[i])]
        else:
            if adversarial[i]:
                degenerate += 1
            key = int(benign[warmup + i])
        result, _ = f.lookup(key)
        if result in positive:
            positives += 1
        if result in false_pos:
            realized += 1

    sim_ns = total * latency.base_ns + positives * latency.hit_ns
    return AdversaryReport(
        warmup_queries=warmup,
        attack_queries=total,
        pool_size=len(pool),
        realized_fps=realized,
        realized_fp_rate=realized / total if total else 0.0,
        positives=positives,
        effective_qps=total / (sim_ns / 1e9) if sim_ns else 0.0,
        degenerate_draws=degenerate,
        wall_nanos=time.perf_counter_ns() - t0,
    )


def run_churn(
    f: AdaptiveFilter,
    live_keys,
    spec: WorkloadSpec,
    probe_sets: int = 20,
    probe_size: int = 100_000,
    churn_seed: int = 1,
) -> list[TraceRow]:
    """Adapting queries with periodic delete-and-replace events.

    Every spec.interval_pct of the run, spec.replace_pct percent of the
    live keys leave and as many fresh ones arrive.  Checkpoints land
    immediately before each churn event and at the end, and each one
    re-checks that every live key still answers positive.
    """
    live = [int(k) for k in live_keys]
    queries = gen_workload(spec)
    probes = make_probe_sets(spec, probe_sets, probe_size)
    rng = np.random.default_rng(churn_seed)
    t0 = time.perf_counter_ns()

    def checkpoint(done: int) -> TraceRow:
        index = f.frozen_index()
        alive = index.query_keys(np.array(live, dtype=np.uint64))
        if not alive.all():
            raise StateCorruptionError(
                f"{int((~alive).sum())} live keys answered negative at op {done}"
            )
        return TraceRow(
            ops_done=done,
            instantaneous_fpr=measure_fpr(index, probes),
            bits_per_item_extra=extra_bits_per_item(f),
            map_accesses=f.map_accesses,
            wall_nanos=time.perf_counter_ns() - t0,
        )

    rows = [checkpoint(0)]
    step = max(1, len(queries) * spec.interval_pct // 100)
    done = 0
    while done < len(queries):
        stop = min(done + step, len(queries))
        for k in queries[done:stop]:
            f.lookup(int(k))
        done = stop
        rows.append(checkpoint(done))
        if done < len(queries) and spec.replace_pct:
            n_replace = len(live) * spec.replace_pct // 100
            victims = set(int(v) for v in rng.choice(len(live), size=n_replace,
                                                     replace=False))
            for v in victims:
                f.delete(live[v])
            live = [k for i, k in enumerate(live) if i not in victims]
            fresh = rng.integers(CHURN_SPACE[0], CHURN_SPACE[1], size=n_replace,
                                 dtype=np.uint64)
            for k in fresh:
                f.insert(int(k))
                live.append(int(k))
    return rows


CSV_HEADER = ["ops", "fpr", "extra_bits_per_item", "map_accesses", "wall_nanos"]


def report_csv(rows: list[TraceRow], path, meta: dict | None = None) -> None:
    """Write rows under the standard header, metadata as a # comment."""
    with open(path, "w", newline="") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([
                row.ops_done,
                repr(row.instantaneous_fpr),
                repr(row.bits_per_item_extra),
                row.map_accesses,
                row.wall_nanos,
            ])


def parse_csv(path) -> list[TraceRow]:
    rows = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise InvalidConfigError(f"unexpected CSV header {header}")
        for rec in reader:
            rows.append(TraceRow(int(rec[0]), float(rec[1]), float(rec[2]),
                                 int(rec[3]), int(rec[4])))
    return rows
