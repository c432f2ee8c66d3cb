"""Failure-rate model for threshold social recovery.

An adversary who has stolen the owner's backup walks the owner's contact
list in random order asking each person for help.  Regular contacts ignore
(``p1``) or warn the owner (``p2``); trustees ignore (``q1``), warn (``q2``)
or are fooled (``q3``).  Any warning ends the attack.  The attack succeeds
once ``k`` trustees have been fooled.

Quantities:

* ``P`` attack success probability (exact scenario sum, plus the small
  ``n/N`` closed-form approximation),
* ``Q`` probability that fewer than ``k`` trustees are available,
* ``F = 1 - (1 - P)(1 - Q)`` combined failure, or ``P + Q`` when both are small.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError

_SUM_TOL = 1e-12

# comparison baselines (per-attempt rates for the non-social methods)
PASSWORD_GUESS_RATE = 0.4
PASSWORD_FORGET_RATE = 0.0428
FINGERPRINT_SPOOF_RATE = 0.05
FINGERPRINT_FALSE_REJECT_RATE = 0.05


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ParameterError(f"{name} must be a probability in [0, 1], got {value}")


@dataclass(frozen=True)
class AdversaryModel:
    contacts_N: int
    p_steal: float
    p1: float
    p2: float
    q1: float
    q2: float
    q3: float

    def __post_init__(self):
        if self.contacts_N < 1:
            raise ParameterError("contacts_N must be at least 1")
        for name in ("p_steal", "p1", "p2", "q1", "q2", "q3"):
            _check_prob(name, getattr(self, name))
        if abs(self.p1 + self.p2 - 1.0) > _SUM_TOL:
            raise ParameterError(f"p1 + p2 must equal 1, got {self.p1 + self.p2}")
        if abs(self.q1 + self.q2 + self.q3 - 1.0) > _SUM_TOL:
            raise ParameterError(f"q1 + q2 + q3 must equal 1, got {self.q1 + self.q2 + self.q3}")

    @classmethod
    def symmetric(cls, contacts_N: int, p_steal: float, p1: float, q3: float) -> "AdversaryModel":
        """Model where a trustee who is not fooled ignores or warns with equal odds."""
        rest = (1.0 - q3) / 2
        return cls(contacts_N, p_steal, p1, 1.0 - p1, rest, 1.0 - q3 - rest, q3)


@dataclass(frozen=True)
class AnalysisParams:
    model: AdversaryModel
    unavailability_U: float

    def __post_init__(self):
        _check_prob("unavailability_U", self.unavailability_U)

    def with_model(self, **changes) -> "AnalysisParams":
        return replace(self, model=replace(self.model, **changes))


def default_params() -> AnalysisParams:
    """Real-world estimates: 404 contacts, 0.274% theft, 45% fooled, 0.1% unavailable."""
    q3 = 0.45
    return AnalysisParams(
        AdversaryModel(contacts_N=404, p_steal=0.00274, p1=q3, p2=1.0 - q3,
                       q1=(1.0 - q3) / 2, q2=(1.0 - q3) / 2, q3=q3),
        unavailability_U=0.001,
    )


def _model(params: AnalysisParams | AdversaryModel) -> AdversaryModel:
    return params.model if isinstance(params, AnalysisParams) else params


def binom(n: int, k: int) -> float:
    """Binomial coefficient in double precision, computed multiplicatively."""
    if k < 0 or k > n:
        return 0.0
    k = min(k, n - k)
    r = 1.0
    for t in range(1, k + 1):
        r = r * (n - k + t) / t
    return r


def _check_kn(model: AdversaryModel, k: int, n: int) -> None:
    if not 1 <= k <= n <= model.contacts_N:
        raise ParameterError(f"need 1 <= k <= n <= N, got k={k}, n={n}, N={model.contacts_N}")


def scenario_success_probability(params: AnalysisParams | AdversaryModel, k: int, n: int, i: int, j: int) -> float:
    """Probability that the k-th fooled trustee is the i-th trustee asked, after j regular contacts."""
    m = _model(params)
    _check_kn(m, k, n)
    N = m.contacts_N
    if not k <= i <= n:
        raise ParameterError(f"need k <= i <= n, got i={i}")
    if not 0 <= j <= N - n:
        raise ParameterError(f"need 0 <= j <= N - n, got j={j}")
    scenario = binom(i - 1 + j, j) * binom(N - i - j, n - i) / binom(N, n)
    fool = m.p1 ** j * binom(i - 1, i - k) * m.q3 ** k * m.q1 ** (i - k)
    return scenario * fool


def attack_success_exact(params: AnalysisParams | AdversaryModel, k: int, n: int) -> float:
    m = _model(params)
    _check_kn(m, k, n)
    N = m.contacts_N
    omega = binom(N, n)
    terms = []
    for i in range(k, n + 1):
        fool = binom(i - 1, i - k) * m.q3 ** k * m.q1 ** (i - k)
        if fool == 0.0:
            continue
        term = binom(N - i, n - i) / omega * fool
        running = term
        terms.append(term)
        # successive j terms differ by a simple ratio; no factorials needed
        for j in range(N - n):
            ratio = m.p1 * (i + j) / (j + 1) * (N - n - j) / (N - i - j)
            term *= ratio
            if term == 0.0:
                break
            terms.append(term)
            running += term
            if ratio < 1.0 and term < 1e-30 * running:
                break
    terms.sort()
    return m.p_steal * math.fsum(terms)


def attack_success_approx(params: AnalysisParams | AdversaryModel, k: int, n: int) -> float:
    m = _model(params)
    _check_kn(m, k, n)
    return m.p_steal * (n / m.contacts_N * m.q3) ** k


def recovery_unreliability(U: float, k: int, n: int) -> float:
    """Probability that more than n - k of n trustees are unavailable."""
    _check_prob("U", U)
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    return math.fsum(binom(n, i) * (1.0 - U) ** (n - i) * U ** i for i in range(n - k + 1, n + 1))


def combined_failure(P: float, Q: float, approximate: bool = False) -> float:
    _check_prob("P", P)
    _check_prob("Q", Q)
    if approximate:
        return P + Q
    # same as 1 - (1-P)(1-Q) without cancellation when P or Q is tiny
    return min(1.0, P + Q - P * Q)


@dataclass(frozen=True)
class FailureReport:
    n: int
    k: int
    P: float
    Q: float
    F: float


def failure_report(params: AnalysisParams, k: int, n: int, approximate: bool = False) -> FailureReport:
    P = attack_success_exact(params, k, n)
    Q = recovery_unreliability(params.unavailability_U, k, n)
    return FailureReport(n, k, P, Q, combined_failure(P, Q, approximate))


# -- Monte Carlo oracle

@dataclass(frozen=True)
class SimulationResult:
    estimate: float
    std_error: float
    successes: int
    trials: int


def _walk_successes(rng: np.random.Generator, m: AdversaryModel, k: int, n: int, trials: int) -> int:
    N = m.contacts_N
    chunk = max(1, 2_000_000 // N)
    notify_trustee_at = m.q3 + m.q1 if m.q2 > 0 else 2.0
    notify_regular_at = m.p1 if m.p2 > 0 else 2.0
    successes = 0
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        # contact ids < n are the trustees; argsort of iid keys is a uniform permutation
        order = np.argsort(rng.random((size, N)), axis=1)
        trustee = order < n
        u = rng.random((size, N))
        fooled = trustee & (u < m.q3)
        notify = np.where(trustee, u >= notify_trustee_at, u >= notify_regular_at)
        reached = np.cumsum(fooled, axis=1) >= k
        has_k = reached[:, -1]
        k_at = reached.argmax(axis=1)
        warn_at = np.where(notify.any(axis=1), notify.argmax(axis=1), N)
        successes += int(np.count_nonzero(has_k & (k_at < warn_at)))
        done += size
    return successes


def simulate_attack(params: AnalysisParams | AdversaryModel, k: int, n: int, trials: int,
                    seed: int = 0, workers: int = 1) -> SimulationResult:
    """Monte Carlo estimate of the attack success probability.

    Trials are split across ``workers`` independent streams spawned from
    ``seed``; the result depends only on ``(seed, trials, workers)``.
    """
    m = _model(params)
    _check_kn(m, k, n)
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    workers = max(1, min(workers, trials))
    streams = np.random.SeedSequence(seed).spawn(workers)
    counts = [trials // workers + (1 if w < trials % workers else 0) for w in range(workers)]

    def run(w: int) -> int:
        return _walk_successes(np.random.default_rng(streams[w]), m, k, n, counts[w])

    if workers == 1:
        successes = run(0)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            successes = sum(pool.map(run, range(workers)))
    p_hat = successes / trials
    return SimulationResult(
        estimate=m.p_steal * p_hat,
        std_error=m.p_steal * math.sqrt(p_hat * (1.0 - p_hat) / trials),
        successes=successes,
        trials=trials,
    )


# -- (k, n) optimization

@dataclass(frozen=True)
class ThresholdOptimum:
    n: int
    k_star: int
    F_min: float
    curve: tuple[FailureReport, ...] = field(repr=False)


def threshold_curve(params: AnalysisParams, n: int) -> list[FailureReport]:
    return [failure_report(params, k, n) for k in range(1, n + 1)]


def optimal_threshold(params: AnalysisParams, n: int) -> ThresholdOptimum:
    if n < 1:
        raise ParameterError("n must be at least 1")
    curve = threshold_curve(params, n)
    best = curve[0]
    for r in curve[1:]:
        if r.F < best.F:  # strict: ties keep the smaller k
            best = r
    return ThresholdOptimum(n, best.k, best.F, tuple(curve))


def optimize_over_n(params: AnalysisParams, n_values: Iterable[int]) -> list[ThresholdOptimum]:
    return [optimal_threshold(params, n) for n in n_values]


# -- comparison with other backup methods

APPROACHES = ("local_storage", "password", "biometric", "direct_escrow", "indirect_permission")


def comparison_table(params: AnalysisParams, k: int = 3, n: int = 5) -> dict[str, FailureReport]:
    """Failure rates of five backup methods, combined as ``P + Q``.

    * local storage: theft equals compromise; loss is taken equal to the theft rate
    * password: theft times guess rate; loss is forgetting the password
    * biometric: theft times spoof rate; loss is false rejection
    * direct escrow: trustees hold password-protected shares, so the attacker
      only needs to fool k of the n known trustees and guess the password
    * indirect permission: this toolkit's scheme
    """
    m = params.model
    U = params.unavailability_U
    Q_trustees = recovery_unreliability(U, k, n)
    escrow_model = replace(m, contacts_N=n, p_steal=1.0)
    rows = {
        "local_storage": (m.p_steal, m.p_steal),
        "password": (PASSWORD_GUESS_RATE * m.p_steal, PASSWORD_FORGET_RATE),
        "biometric": (FINGERPRINT_SPOOF_RATE * m.p_steal, FINGERPRINT_FALSE_REJECT_RATE),
        "direct_escrow": (PASSWORD_GUESS_RATE * attack_success_exact(escrow_model, k, n), Q_trustees),
        "indirect_permission": (attack_success_exact(params, k, n), Q_trustees),
    }
    return {name: FailureReport(n, k, P, Q, combined_failure(P, Q, approximate=True))
            for name, (P, Q) in rows.items()}


# -- CSV emitters

CURVE_COLUMNS = ("k", "P", "Q", "F")
SWEEP_COLUMNS = ("n", "k_star", "F_min")
COMPARISON_COLUMNS = ("approach", "P", "Q", "F")


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def curve_csv(curve: Sequence[FailureReport]) -> str:
    return _csv(CURVE_COLUMNS, ((r.k, r.P, r.Q, r.F) for r in curve))


def sweep_csv(optima: Sequence[ThresholdOptimum]) -> str:
    return _csv(SWEEP_COLUMNS, ((o.n, o.k_star, o.F_min) for o in optima))


def comparison_csv(table: dict[str, FailureReport]) -> str:
    return _csv(COMPARISON_COLUMNS, ((name, r.P, r.Q, r.F) for name, r in table.items()))
