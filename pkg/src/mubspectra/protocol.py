"""Multiple-access channel that carries messages in second moments.

Each user owns a few slots of one MUB base.  Every frame (``d`` channel
intervals) a user sends ``M_b @ a`` where ``a`` holds ``+-sqrt(message)`` in
its slots, with fresh random signs per frame.  The channel adds all users
together.  A receiver tracking user ``i`` keeps the running mean of
``|(M_b^H X)_s|^2`` for each of that user's slots: foreign bases only add the
same constant to every slot of ``b``, so the ordering of the means reveals
the ordering of the messages.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .core import MubFamily, build_mub_family, is_odd_prime, two_qubit_mub_family
from .random_model import RandomSource

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@lru_cache(maxsize=8)
def protocol_family(d: int) -> MubFamily:
    """Odd primes use the chirp construction; ``d = 4`` uses the two-qubit bases."""
    if d == 4:
        return two_qubit_mub_family()
    if is_odd_prime(d):
        return build_mub_family(d)
    raise ConfigError(f"no MUB family available for d={d} (odd primes and 4 only)")


@dataclass(frozen=True)
class ProtocolConfig:
    d: int = 4
    n: int = 10
    slots_per_user: int = 2
    rounds: int = 1000
    noise_power: float = 0.0
    quant_mag: int | None = None  # None -> d**3, 0 -> off
    quant_phase: int | None = None
    gap: float = 0.2
    replicates: int = 200
    seed: int = 0
    # user (1-based) -> ((start_round, stop_round), ...); absent users are always on
    active_schedule: Mapping[int, tuple[tuple[int, int], ...]] = field(default_factory=dict)
    # user (1-based) -> fixed messages; others are drawn per replicate
    messages: Mapping[int, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if self.slots_per_user < 1 or self.slots_per_user > self.d:
            raise ConfigError("slots_per_user must be in 1..d")
        if self.n < 1:
            raise ConfigError("need at least one user")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.noise_power < 0:
            raise ConfigError("noise_power must be nonnegative")
        if not 0 <= self.gap < 1:
            raise ConfigError("gap must be in [0, 1)")
        if self.n > self.capacity:
            log.warning("%d users exceed the %d disjoint (base, slot) groups; some users share slots",
                        self.n, self.capacity)

    @property
    def users_per_base(self) -> int:
        return self.d // self.slots_per_user

    @property
    def capacity(self) -> int:
        return self.users_per_base * (self.d + 1)

    @property
    def mag_levels(self) -> int:
        return self.d**3 if self.quant_mag is None else int(self.quant_mag)

    @property
    def phase_levels(self) -> int:
        return self.d**3 if self.quant_phase is None else int(self.quant_phase)

    def with_(self, **changes) -> "ProtocolConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ProtocolConfig(**values)


CONFIG_KEYS = ("d", "n", "slots_per_user", "rounds", "noise_power", "quant_mag", "quant_phase", "gap", "replicates", "seed")


def parse_config(text: str) -> ProtocolConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = float(value) if key in ("noise_power", "gap") else int(value)
    return ProtocolConfig(**values)


def format_config(config: ProtocolConfig) -> str:
    lines = []
    for key in CONFIG_KEYS:
        value = getattr(config, key)
        if key == "quant_mag":
            value = config.mag_levels
        elif key == "quant_phase":
            value = config.phase_levels
        lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class UserAssignment:
    user: int
    base: int
    slots: tuple[int, ...]


def assign_users(config: ProtocolConfig) -> list[UserAssignment]:
    """Two users per base first: user ``i`` gets base ``floor((i+1)/2)``.

    Odd users take slot block 0, even users block 1 (blocks are
    ``slots_per_user`` wide).  Later users fill the remaining blocks one per
    base in turn.  Once every block is taken the assignment wraps around, so
    over-subscribed users share slots with earlier ones.
    """
    d, s, u = config.d, config.slots_per_user, config.users_per_base
    first = min(2, u)
    out = []
    for i in range(1, config.n + 1):
        if i <= first * (d + 1):
            base, block = (i - 1) // first + 1, (i - 1) % first
        else:
            j = (i - 1 - first * (d + 1)) % ((d + 1) * max(u - first, 1))
            base, block = j % (d + 1) + 1, first + j // (d + 1)
            if block >= u:
                block = (j // (d + 1)) % u
        out.append(UserAssignment(i, base, tuple(range(block * s, block * s + s))))
    return out


def encode_user_round(messages, assignment: UserAssignment, family: MubFamily, rng: np.random.Generator) -> np.ndarray:
    """One frame of a user's transmission: ``M_b @ a`` with ``a[slot] = +-sqrt(message)``."""
    messages = np.asarray(messages, dtype=float)
    if messages.shape != (len(assignment.slots),):
        raise ValueError("one message per slot is required")
    if np.any((messages < 0) | (messages > 1)):
        raise ValueError("messages must lie in [0, 1]")
    signs = rng.integers(0, 2, size=messages.shape) * 2 - 1
    a = np.zeros(family.d, dtype=complex)
    a[list(assignment.slots)] = signs * np.sqrt(messages)
    return family[assignment.base] @ a


@dataclass(frozen=True)
class Quantizer:
    """Uniform magnitude levels on ``[0, max_magnitude]`` and uniform phase levels.

    A level count of 0 disables that half of the quantizer.
    """

    mag_levels: int
    phase_levels: int
    max_magnitude: float

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if not self.enabled:
            return z
        mag, phase = np.abs(z), np.angle(z)
        if self.mag_levels > 1:
            step = self.max_magnitude / (self.mag_levels - 1)
            mag = np.round(np.clip(mag, 0.0, self.max_magnitude) / step) * step
        if self.phase_levels > 0:
            step = 2 * np.pi / self.phase_levels
            phase = np.round(phase / step) * step
        return mag * np.exp(1j * phase)

    @property
    def enabled(self) -> bool:
        return self.mag_levels > 1 or self.phase_levels > 0


def default_quantizer(config: ProtocolConfig) -> Quantizer:
    # every entry of a user's frame is bounded by its norm sqrt(slots_per_user)
    max_mag = config.n * math.sqrt(config.slots_per_user)
    return Quantizer(config.mag_levels, config.phase_levels, max_mag)


def channel_step(user_vectors: Sequence[np.ndarray], noise_power: float = 0.0, quantizer: Quantizer | None = None, rng=None) -> np.ndarray:
    """Sum one frame from every user, add circular Gaussian noise, quantize."""
    x = np.sum(np.asarray(user_vectors, dtype=complex), axis=0)
    if noise_power > 0:
        x = x + _noise(rng, x.shape, noise_power)
    if quantizer is not None and quantizer.enabled:
        x = quantizer(x)
    return x


def _noise(rng, shape, power):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(power / 2)


def slot_energies(received: np.ndarray, base: int, slots: Sequence[int], family: MubFamily) -> np.ndarray:
    """``|(M_b^H X)_s|^2`` per frame, shape ``(rounds, len(slots))``."""
    received = np.atleast_2d(received)
    return np.abs(received @ family[base][:, list(slots)].conj()) ** 2


def decode_second_moments(received: np.ndarray, watch: tuple[int, Sequence[int]], family: MubFamily) -> tuple[np.ndarray, int]:
    """Running means of the watched slot energies and the final decision.

    Returns ``(means, winner)``: ``means[r]`` averages frames ``0..r`` and
    ``winner`` is the position (within the watched slots) of the largest final mean.
    """
    base, slots = watch
    p = slot_energies(received, base, slots, family)
    means = np.cumsum(p, axis=0) / np.arange(1, p.shape[0] + 1)[:, None]
    return means, int(np.argmax(means[-1]))


def draw_messages(rng: np.random.Generator, slots: int, gap: float) -> np.ndarray:
    """Uniform messages in [0, 1] whose largest value beats the runner-up by ``gap``."""
    while True:
        m = rng.uniform(0.0, 1.0, slots)
        if slots == 1:
            return m
        top = np.sort(m)
        if top[-1] - top[-2] >= gap:
            return m


@dataclass
class ReplicateTrace:
    """Per-frame data of one replicate, used by metrics and tests."""

    messages: np.ndarray          # (n, s)
    received: np.ndarray          # (rounds, d), after noise and quantization
    clean: np.ndarray             # (rounds, d), before quantization
    active: np.ndarray            # (rounds, n) bool
    foreign_energy: np.ndarray    # (n,) mean foreign energy per frame seen by each user's base


def _active_mask(config: ProtocolConfig) -> np.ndarray:
    mask = np.ones((config.rounds, config.n), dtype=bool)
    for user, spans in config.active_schedule.items():
        col = np.zeros(config.rounds, dtype=bool)
        for start, stop in spans:
            col[max(start, 0):max(min(stop, config.rounds), 0)] = True
        mask[:, user - 1] = col
    return mask


def simulate_replicate(config: ProtocolConfig, replicate: int, family: MubFamily | None = None,
                       assignments: list[UserAssignment] | None = None) -> ReplicateTrace:
    """Run every frame of one replicate.

    Users only know their position inside the current frame, so activity
    changes take effect at frame boundaries; the simulation therefore works
    one frame (``d`` intervals) at a time, vectorized over frames.
    """
    family = family or protocol_family(config.d)
    assignments = assignments or assign_users(config)
    rng = RandomSource(config.seed, replicate).generator()
    d, n, s, r = config.d, config.n, config.slots_per_user, config.rounds

    messages = np.empty((n, s))
    for a in assignments:
        fixed = config.messages.get(a.user)
        messages[a.user - 1] = fixed if fixed is not None else draw_messages(rng, s, config.gap)
    if np.any((messages < 0) | (messages > 1)):
        raise ConfigError("messages must lie in [0, 1]")

    active = _active_mask(config)
    signs = rng.integers(0, 2, size=(r, n, s)).astype(np.int8) * 2 - 1
    amps = signs * np.sqrt(messages)[None] * active[:, :, None]

    clean = np.zeros((r, d), dtype=complex)
    by_base: dict[int, list[UserAssignment]] = {}
    for a in assignments:
        by_base.setdefault(a.base, []).append(a)
    for base, users in by_base.items():
        coeffs = np.zeros((r, d))
        for a in users:
            coeffs[:, list(a.slots)] = amps[:, a.user - 1, :]
        clean += coeffs @ family[base].T
    if config.noise_power > 0:
        clean += _noise(rng, clean.shape, config.noise_power)

    quant = default_quantizer(config)
    received = quant(clean) if quant.enabled else clean

    energy = (messages.sum(axis=1)[None, :] * active).mean(axis=0)
    base_of = np.array([a.base for a in assignments])
    foreign = np.array([energy[base_of != b].sum() for b in base_of])
    return ReplicateTrace(messages, received, clean, active, foreign)


@dataclass(frozen=True)
class PairResult:
    sender: int
    receiver: int
    accuracy: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class ProtocolMetrics:
    config: ProtocolConfig
    pairs: tuple[PairResult, ...]
    sender_accuracy: np.ndarray          # (n,)
    accuracy_curve: np.ndarray           # (rounds, n): success rate using the first r+1 frames
    rounds_to_target: int | None         # first frame count after which every sender stays >= 2/3
    difference_bias: float               # mean of (m_hat_1 - m_hat_2) - (m_1 - m_2)
    difference_bias_se: float
    slot_variance: float                 # mean per-frame variance of the slot energy
    foreign_energy: float                # mean K over senders
    variance_ratio: float                # slot_variance * d^2 / K^2
    quantization_error: float            # mean |final slot mean (quantized) - (unquantized)|

    @property
    def min_accuracy(self) -> float:
        return float(self.sender_accuracy.min())


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def _first_stable(curve: np.ndarray, target: float) -> int | None:
    ok = curve >= target
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return int(bad[-1]) + 2 if bad.size else 1


def run_mac_simulation(config: ProtocolConfig, senders: Sequence[int] | None = None,
                       target: float = 2 / 3) -> ProtocolMetrics:
    """Simulate ``config.replicates`` independent runs and score every (sender, receiver) pair.

    All receivers hear the same channel output, so every receiver of a given
    sender reaches the same decision; the pair table repeats the sender's
    score per receiver.  ``senders`` restricts scoring to a subset of users.
    """
    family = protocol_family(config.d)
    assignments = assign_users(config)
    senders = list(senders) if senders is not None else [a.user for a in assignments]
    tracked = [assignments[u - 1] for u in senders]
    s = config.slots_per_user

    correct_curve = np.zeros((config.rounds, len(tracked)))
    final_correct = np.zeros(len(tracked))
    bias, var, foreign, qerr = [], [], [], []
    for rep in range(config.replicates):
        tr = simulate_replicate(config, rep, family, assignments)
        for t, a in enumerate(tracked):
            on = tr.active[:, a.user - 1]
            p = slot_energies(tr.received[on], a.base, a.slots, family)
            if p.shape[0] == 0:
                continue
            means = np.cumsum(p, axis=0) / np.arange(1, p.shape[0] + 1)[:, None]
            truth = int(np.argmax(tr.messages[a.user - 1]))
            ok = np.argmax(means, axis=1) == truth
            curve = np.ones(config.rounds, dtype=bool) * ok[-1]
            curve[:len(ok)] = ok
            correct_curve[:, t] += curve
            final_correct[t] += ok[-1]
            if s >= 2:
                m = tr.messages[a.user - 1]
                bias.append((means[-1, 0] - means[-1, 1]) - (m[0] - m[1]))
            var.append(p.var(axis=0, ddof=1).mean() if p.shape[0] > 1 else 0.0)
            foreign.append(tr.foreign_energy[a.user - 1])
            if tr.received is not tr.clean:
                pc = slot_energies(tr.clean[on], a.base, a.slots, family)
                qerr.append(np.abs(p.mean(axis=0) - pc.mean(axis=0)).mean())

    reps = config.replicates
    sender_acc = final_correct / reps
    curve = correct_curve / reps
    pairs = []
    for t, a in enumerate(tracked):
        lo, hi = wilson_interval(int(final_correct[t]), reps)
        for b in assignments:
            if b.user != a.user:
                pairs.append(PairResult(a.user, b.user, float(sender_acc[t]), lo, hi))
    k_mean = float(np.mean(foreign)) if foreign else 0.0
    v_mean = float(np.mean(var)) if var else 0.0
    return ProtocolMetrics(
        config=config,
        pairs=tuple(pairs),
        sender_accuracy=sender_acc,
        accuracy_curve=curve,
        rounds_to_target=_first_stable(curve.min(axis=1), target),
        difference_bias=float(np.mean(bias)) if bias else 0.0,
        difference_bias_se=float(np.std(bias, ddof=1) / math.sqrt(len(bias))) if len(bias) > 1 else 0.0,
        slot_variance=v_mean,
        foreign_energy=k_mean,
        variance_ratio=v_mean * config.d**2 / k_mean**2 if k_mean > 0 else math.nan,
        quantization_error=float(np.mean(qerr)) if qerr else 0.0,
    )


@dataclass(frozen=True)
class RoundsEstimate:
    rounds: int | None
    success: float
    foreign_energy: float
    capped: bool


def estimate_rounds_needed(config: ProtocolConfig, target_success: float = 2 / 3, cap: int = 1 << 16) -> RoundsEstimate:
    """Smallest frame count at which every sender succeeds with rate >= target.

    Doubling search over the frame count, then bisection between the last
    failing and first passing count.  Success at ``r`` frames is the rate
    over replicates of correct decisions after exactly ``r`` frames.
    """
    if not 0 < target_success < 1:
        raise ValueError("target_success must be in (0, 1)")

    def trial(r):
        m = run_mac_simulation(config.with_(rounds=r))
        return m.min_accuracy, m.foreign_energy

    lo, hi = 0, 1
    acc, k = trial(hi)
    while acc < target_success:
        if hi >= cap:
            return RoundsEstimate(None, acc, k, True)
        lo, hi = hi, min(2 * hi, cap)
        acc, k = trial(hi)
    best = (hi, acc)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        a, _ = trial(mid)
        if a >= target_success:
            hi, best = mid, (mid, a)
        else:
            lo = mid
    return RoundsEstimate(best[0], best[1], k, False)


def fit_exponent(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass(frozen=True)
class VarianceSweep:
    foreign_energy: np.ndarray
    variance: np.ndarray
    exponent: float


def slot_variance_sweep(d: int, foreign_users: Sequence[int], rounds: int, seed: int = 0,
                        slots_per_user: int = 2) -> VarianceSweep:
    """Per-frame variance of a silent watched slot as foreign users are added.

    Users 1 and 2 share base 1 and send nothing, so the variance of user 1's
    slot energy comes only from the foreign bases, whose users transmit
    full-scale messages.
    """
    family = protocol_family(d)
    k_vals, v_vals = [], []
    for q in foreign_users:
        n = 2 + q
        msgs = {1: (0.0,) * slots_per_user, 2: (0.0,) * slots_per_user}
        msgs.update({i: (1.0,) * slots_per_user for i in range(3, n + 1)})
        cfg = ProtocolConfig(d=d, n=n, slots_per_user=slots_per_user, rounds=rounds, quant_mag=0,
                             quant_phase=0, replicates=1, seed=seed, messages=msgs)
        tr = simulate_replicate(cfg, q, family)
        p = slot_energies(tr.received, 1, (0,), family)[:, 0]
        k_vals.append(tr.foreign_energy[0])
        v_vals.append(p.var(ddof=1))
    k_arr, v_arr = np.array(k_vals), np.array(v_vals)
    return VarianceSweep(k_arr, v_arr, fit_exponent(k_arr, v_arr))


@dataclass(frozen=True)
class InvarianceReport:
    baseline: float          # mean difference estimate without the extra source
    perturbed: float         # ... with the extra source
    baseline_se: float
    perturbed_se: float
    mean_shift: float        # how much the extra source raised the watched slot means

    @property
    def z_score(self) -> float:
        se = math.hypot(self.baseline_se, self.perturbed_se)
        return abs(self.perturbed - self.baseline) / se if se > 0 else 0.0


def foreign_invariance_experiment(d: int = 5, rounds: int = 400, replicates: int = 400, seed: int = 0,
                                  watched=(0.7, 0.3), start: int | None = None) -> InvarianceReport:
    """A/B test: does an extra source in another base move the watched difference estimator?

    Arm A runs user 1 (base 1) against a fixed crowd of foreign users.  Arm B
    adds one more foreign user, switched on at frame ``start`` (default: half
    way through).  Both arms share replicate streams for the common users.
    """
    start = rounds // 2 if start is None else start
    crowd = 4
    n_a = 2 + crowd
    msgs = {1: tuple(watched), 2: (0.0, 0.0)}
    msgs.update({i: (0.8, 0.5) for i in range(3, n_a + 2)})
    arm_a = ProtocolConfig(d=d, n=n_a, rounds=rounds, replicates=replicates, seed=seed,
                           quant_mag=0, quant_phase=0, messages=msgs)
    arm_b = arm_a.with_(n=n_a + 1, active_schedule={n_a + 1: ((start, rounds),)})
    family = protocol_family(d)
    out = []
    for cfg in (arm_a, arm_b):
        diffs, level = [], []
        for rep in range(replicates):
            tr = simulate_replicate(cfg, rep, family)
            p = slot_energies(tr.received, 1, (0, 1), family).mean(axis=0)
            diffs.append(p[0] - p[1])
            level.append(p.mean())
        out.append((np.mean(diffs), np.std(diffs, ddof=1) / math.sqrt(replicates), np.mean(level)))
    (a, sa, la), (b, sb, lb) = out
    return InvarianceReport(float(a), float(b), float(sa), float(sb), float(lb - la))
