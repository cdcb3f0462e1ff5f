"""Sequential Bayesian test between two specimen orientations.

After every incident electron the odds of the Right orientation are
multiplied by the likelihood ratio of what happened to it.  A trial stops
once the posterior leaves the band ``(1 - confidence, confidence)``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .detection import DetectionEvent, Outcome, ScreenDistribution, sample_events
from .errors import DomainError, ShapeError
from .specimen import Orientation

__all__ = [
    "HypothesisPair",
    "Mode",
    "PosteriorTrace",
    "TrialResult",
    "TrialStatistics",
    "Verdict",
    "posterior_from_ratios",
    "run_ensemble",
    "run_trial",
    "statistics_from_event_log",
    "trial_seed",
    "update_posterior",
    "write_traces",
]

FLOOR_FACTOR = 1e-3


class Mode(enum.Enum):
    DETECTIONS_ONLY = "detections-only"
    FULL_INFORMATION = "full-information"


class Verdict(enum.Enum):
    ACCEPT_RIGHT = "accept_right"
    ACCEPT_WRONG = "accept_wrong"
    UNDECIDED = "undecided"


class HypothesisPair:
    """Screen distributions of both orientations seen through the same element.

    Per-pixel probabilities are floored at ``floor_factor / n_pixels`` before
    the ratio table is formed, so no single electron is ever conclusive on its
    own.
    """

    def __init__(
        self,
        dist_right: ScreenDistribution,
        dist_wrong: ScreenDistribution,
        prior_right: float = 0.5,
        floor_factor: float = FLOOR_FACTOR,
    ):
        if dist_right.shape != dist_wrong.shape:
            raise ShapeError(f"screen grids differ: {dist_right.shape} vs {dist_wrong.shape}")
        if not math.isclose(dist_right.pixel_size, dist_wrong.pixel_size, rel_tol=1e-9):
            raise ShapeError("screen pixel sizes differ")
        if not 0 < prior_right < 1:
            raise DomainError(f"prior must lie in (0, 1), got {prior_right}")
        if not floor_factor > 0:
            raise DomainError("floor_factor must be positive")
        self.right = dist_right
        self.wrong = dist_wrong
        self.prior_right = float(prior_right)
        floor = floor_factor / dist_right.pmf.size
        ratio = np.maximum(dist_right.pmf, floor) / np.maximum(dist_wrong.pmf, floor)
        ratio.setflags(write=False)
        self.ratio = ratio
        self._flat_ratio = ratio.ravel()
        self.absorbed_ratio = _absorbed_ratio(dist_right.detect_prob, dist_wrong.detect_prob)

    @property
    def shape(self):
        return self.right.shape

    def distribution(self, truth: Orientation) -> ScreenDistribution:
        return self.right if truth is Orientation.RIGHT else self.wrong

    def event_ratio(self, event: DetectionEvent, mode: Mode) -> float:
        if event.outcome is Outcome.DETECTED:
            i, j = event.pixel
            if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
                raise ShapeError(f"event pixel {event.pixel} outside screen {self.shape}")
            return float(self.ratio[i, j])
        return self.absorbed_ratio if mode is Mode.FULL_INFORMATION else 1.0


def _absorbed_ratio(t_right: float, t_wrong: float) -> float:
    a_r, a_w = 1.0 - t_right, 1.0 - t_wrong
    if a_r == a_w:
        return 1.0
    tiny = 1e-12
    return max(a_r, tiny) / max(a_w, tiny)


def _odds(p: float) -> float:
    return p / (1.0 - p)


def _prob(odds: float) -> float:
    return odds / (1.0 + odds)


def update_posterior(prior: float, event: DetectionEvent, pair: HypothesisPair, mode: Mode = Mode.DETECTIONS_ONLY) -> float:
    """Posterior probability of Right after one event."""
    if not 0 < prior < 1:
        raise DomainError(f"prior must lie in (0, 1), got {prior}")
    return _prob(_odds(prior) * pair.event_ratio(event, mode))


def posterior_from_ratios(prior: float, ratios) -> float:
    """Closed form: prior odds times the product of all ratios.

    The factors are multiplied in sorted order, so the result is bit-for-bit
    independent of the order in which the events arrived.
    """
    return _prob(_odds(prior) * math.prod(sorted(ratios)))


@dataclass(frozen=True)
class PosteriorTrace:
    """One row per incident electron, preceded by the prior at (0, 0)."""

    n_detected: np.ndarray
    n_incident: np.ndarray
    posterior: np.ndarray

    def __len__(self):
        return len(self.posterior)

    def posterior_at_detected(self, k: int) -> float:
        """Posterior once ``k`` electrons were detected, holding the final value after a stop."""
        idx = np.searchsorted(self.n_detected, k, side="right") - 1
        return float(self.posterior[idx])


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: tuple[int, ...]
    verdict: Verdict
    trace: PosteriorTrace
    codes: np.ndarray
    ix: np.ndarray
    iy: np.ndarray

    @property
    def n_detected(self) -> int:
        return int(self.trace.n_detected[-1])

    @property
    def n_incident(self) -> int:
        return int(self.trace.n_incident[-1])

    def tally(self) -> dict[str, int]:
        return {
            Outcome.DETECTED.value: int(np.count_nonzero(self.codes == 0)),
            Outcome.ABSORBED_ELEMENT.value: int(np.count_nonzero(self.codes == 1)),
            Outcome.ABSORBED_SPECIMEN.value: int(np.count_nonzero(self.codes == 2)),
        }


def trial_seed(master_seed: int, truth: Orientation, trial: int) -> tuple[int, int, int]:
    """Entropy for one trial's private generator: (master, truth index, trial)."""
    return (int(master_seed), 0 if truth is Orientation.RIGHT else 1, int(trial))


def _generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))


def run_trial(
    truth: Orientation,
    pair: HypothesisPair,
    confidence: float = 0.95,
    max_incident: int = 100_000,
    rng: np.random.Generator | None = None,
    mode: Mode = Mode.DETECTIONS_ONLY,
    *,
    trial: int = 0,
    seed: tuple[int, ...] = (),
) -> TrialResult:
    """Draw electrons from the ``truth`` distribution until a decision or ``max_incident``.

    Events are drawn in growing batches; the generator is consumed exactly as
    by one-at-a-time sampling, and the odds are multiplied in event order.
    """
    if not 0.5 < confidence < 1:
        raise DomainError(f"confidence must lie in (0.5, 1), got {confidence}")
    if max_incident < 1:
        raise DomainError("max_incident must be positive")
    if rng is None:
        rng = _generator(seed or (0,))
    dist = pair.distribution(truth)
    absorbed = pair.absorbed_ratio if mode is Mode.FULL_INFORMATION else 1.0
    hi, lo = confidence, 1.0 - confidence

    odds = _odds(pair.prior_right)
    chunks_c, chunks_x, chunks_y, chunks_p = [], [], [], []
    verdict = Verdict.UNDECIDED
    drawn = 0
    batch = 16
    while drawn < max_incident:
        m = min(batch, max_incident - drawn)
        codes, ix, iy = sample_events(dist, rng, m)
        r = np.full(m, absorbed)
        det = codes == 0
        r[det] = pair.ratio[ix[det], iy[det]]
        # running product in event order; identical to repeated multiplication
        running = np.multiply.accumulate(np.concatenate(([odds], r)))[1:]
        post = running / (1.0 + running)
        stop = np.flatnonzero((post >= hi) | (post <= lo))
        if stop.size:
            k = stop[0] + 1
            verdict = Verdict.ACCEPT_RIGHT if post[k - 1] >= hi else Verdict.ACCEPT_WRONG
        else:
            k = m
        chunks_c.append(codes[:k])
        chunks_x.append(ix[:k])
        chunks_y.append(iy[:k])
        chunks_p.append(post[:k])
        odds = running[k - 1]
        drawn += k
        if verdict is not Verdict.UNDECIDED:
            break
        batch = min(batch * 2, 4096)

    codes = np.concatenate(chunks_c)
    posts = np.concatenate(chunks_p)
    n_det = np.concatenate(([0], np.cumsum(codes == 0)))
    n_inc = np.arange(codes.size + 1)
    trace = PosteriorTrace(n_det, n_inc, np.concatenate(([pair.prior_right], posts)))
    return TrialResult(trial, tuple(seed), verdict, trace, codes, np.concatenate(chunks_x), np.concatenate(chunks_y))


@dataclass(frozen=True)
class TrialStatistics:
    """Ensemble summary for one true orientation.

    Means and standard deviations (population, ddof=0) are over decided
    trials.  Rates are fractions of all trials.  ``false_accept_rate`` counts
    Right being accepted while Wrong is true; ``false_reject_rate`` counts
    Right being rejected while it is true.
    """

    truth: str
    n_trials: int
    n_decided: int
    n_undecided: int
    mean_detected: float
    std_detected: float
    mean_incident: float
    std_incident: float
    accept_right_rate: float
    accept_wrong_rate: float
    false_accept_rate: float
    false_reject_rate: float
    detected_total: int
    absorbed_specimen_total: int
    absorbed_element_total: int

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(truth: Orientation, verdicts, n_detected, n_incident, tallies) -> TrialStatistics:
    verdicts = list(verdicts)
    n = len(verdicts)
    if n == 0:
        raise DomainError("no trials to summarise")
    decided = np.array([v is not Verdict.UNDECIDED for v in verdicts])
    det = np.asarray(n_detected, dtype=float)[decided]
    inc = np.asarray(n_incident, dtype=float)[decided]
    n_ar = sum(v is Verdict.ACCEPT_RIGHT for v in verdicts)
    n_aw = sum(v is Verdict.ACCEPT_WRONG for v in verdicts)
    nan = float("nan")
    return TrialStatistics(
        truth=truth.value,
        n_trials=n,
        n_decided=int(decided.sum()),
        n_undecided=int(n - decided.sum()),
        mean_detected=float(det.mean()) if det.size else nan,
        std_detected=float(det.std()) if det.size else nan,
        mean_incident=float(inc.mean()) if inc.size else nan,
        std_incident=float(inc.std()) if inc.size else nan,
        accept_right_rate=n_ar / n,
        accept_wrong_rate=n_aw / n,
        false_accept_rate=n_ar / n if truth is Orientation.WRONG else 0.0,
        false_reject_rate=n_aw / n if truth is Orientation.RIGHT else 0.0,
        detected_total=int(sum(t[Outcome.DETECTED.value] for t in tallies)),
        absorbed_specimen_total=int(sum(t[Outcome.ABSORBED_SPECIMEN.value] for t in tallies)),
        absorbed_element_total=int(sum(t[Outcome.ABSORBED_ELEMENT.value] for t in tallies)),
    )


def run_ensemble(
    truth: Orientation,
    pair: HypothesisPair,
    confidence: float = 0.95,
    n_trials: int = 500,
    seed: int = 0,
    mode: Mode = Mode.DETECTIONS_ONLY,
    max_incident: int = 100_000,
    threads: int = 1,
) -> tuple[TrialStatistics, list[TrialResult]]:
    """Run independent seeded trials and summarise them.

    Trial ``k`` draws from ``PCG64(SeedSequence([seed, truth_index, k]))`` so
    results do not depend on ``threads`` or scheduling order.
    """
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    if threads < 1:
        raise DomainError("threads must be at least 1")

    def one(k):
        s = trial_seed(seed, truth, k)
        return run_trial(truth, pair, confidence, max_incident, _generator(s), mode, trial=k, seed=s)

    if threads == 1:
        results = [one(k) for k in range(n_trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_trials)))
    stats = summarize(
        truth,
        [r.verdict for r in results],
        [r.n_detected for r in results],
        [r.n_incident for r in results],
        [r.tally() for r in results],
    )
    return stats, results


_OUTCOME_NAMES = {0: Outcome.DETECTED.value, 1: Outcome.ABSORBED_ELEMENT.value, 2: Outcome.ABSORBED_SPECIMEN.value}


def event_rows(results):
    """Rows for :func:`lowdose.detection.write_event_log`."""
    for r in results:
        posts = r.trace.posterior[1:]
        for k in range(r.codes.size):
            yield (r.trial, k, _OUTCOME_NAMES[int(r.codes[k])], int(r.ix[k]), int(r.iy[k]), posts[k])


def write_traces(path, results, comment_lines=()) -> None:
    """CSV trace: trial, n_detected, n_incident, posterior (one row per step, prior first)."""
    with open(path, "w", newline="") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["trial", "n_detected", "n_incident", "posterior"])
        for r in results:
            t = r.trace
            for a, b, p in zip(t.n_detected, t.n_incident, t.posterior):
                w.writerow([r.trial, int(a), int(b), repr(float(p))])


def confidence_curve(results, max_detected: int | None = None):
    """Posterior quantiles over trials versus detected-electron count.

    Returns a structured array with fields n_detected, mean, median, q25, q75.
    Trials that stopped earlier contribute their final posterior.
    """
    if max_detected is None:
        max_detected = max(r.n_detected for r in results)
    ks = np.arange(max_detected + 1)
    table = np.array([[r.trace.posterior_at_detected(k) for k in ks] for r in results])
    out = np.zeros(ks.size, dtype=[("n_detected", int), ("mean", float), ("median", float), ("q25", float), ("q75", float)])
    out["n_detected"] = ks
    out["mean"] = table.mean(axis=0)
    out["median"] = np.median(table, axis=0)
    out["q25"] = np.quantile(table, 0.25, axis=0)
    out["q75"] = np.quantile(table, 0.75, axis=0)
    return out


def statistics_from_event_log(path) -> TrialStatistics:
    """Rebuild ensemble statistics from an event log alone.

    The log header must carry ``truth=`` and ``confidence=`` comment lines;
    each trial's verdict follows from its last posterior.
    """
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            else:
                lines.append(line)
        rows = list(csv.DictReader(lines))
    truth = Orientation(meta["truth"])
    conf = float(meta["confidence"])
    per = {}
    for row in rows:
        k = int(row["trial"])
        d = per.setdefault(k, {"det": 0, "inc": 0, "post": None, "tally": {o.value: 0 for o in Outcome}})
        d["inc"] += 1
        d["tally"][row["outcome"]] += 1
        if row["outcome"] == Outcome.DETECTED.value:
            d["det"] += 1
        d["post"] = float(row["posterior"])
    verdicts = []
    for k in sorted(per):
        p = per[k]["post"]
        if p >= conf:
            verdicts.append(Verdict.ACCEPT_RIGHT)
        elif p <= 1 - conf:
            verdicts.append(Verdict.ACCEPT_WRONG)
        else:
            verdicts.append(Verdict.UNDECIDED)
    order = sorted(per)
    return summarize(
        truth,
        verdicts,
        [per[k]["det"] for k in order],
        [per[k]["inc"] for k in order],
        [per[k]["tally"] for k in order],
    )


def summary_json(stats: TrialStatistics, extra: dict) -> str:
    return json.dumps({**extra, "statistics": stats.to_dict()}, indent=2, sort_keys=True, allow_nan=True)
