"""Synthetic-agent timing experiment: snapping ON versus OFF.

Each trial drops a gaze agent in front of the real pipeline (smoothing
filter, snap or snap_disabled, dwell machine) and measures how long it
takes until the dwell Pick fires on the requested object. The agent
models closed-loop human aiming:

  * an initial ballistic saccade lands near the target center with
    Gaussian landing error (undershoot_px),
  * afterwards the agent watches the displayed cursor; whenever it reads
    off-center it issues a corrective micro-saccade moving the aim point
    by saccade_gain times the visible error,
  * gaze samples scatter around the aim point with fixation noise
    jitter_px while the agent is actively steering; once the cursor reads
    on-center the eye anchors on it, drifting onto the displayed cursor
    at the same gain, and the scatter drops to ANCHORED_JITTER_FRACTION
    of jitter_px.

With snapping ON the cursor pins to the box center the moment the gaze
enters the box, so the visible error collapses to zero, corrections stop,
and the anchored eye rides out the dwell. With snapping OFF the cursor
is the smoothed gaze itself: it never reads exactly on-center, the agent
keeps chasing residual error, fixation noise stays high, and on small
boxes the gaze repeatedly escapes long enough to reset the dwell timer.
The harness therefore reproduces the direction of the hardware study
(snapping cuts mean completion time) without any hardware.

completion_ms measures trial start to the Pick request; robot execution
time is excluded. Trials hitting timeout_ms are recorded with the
timeout as their completion time and flagged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import ScreenPoint
from .config import default_homography, default_scene
from .dwell import DwellConfig, dwell_init, dwell_tick
from .robot import detector_frame
from .smoothing import FilterParams, filter_init, filter_step
from .stats import AnovaResult, one_way_anova, repeated_measures_anova
from .workspace import DetectionFrame, ViewMapping, snap, snap_disabled

CONDITION_OFF = "OFF"
CONDITION_ON = "ON"
CONDITIONS = (CONDITION_OFF, CONDITION_ON)

# fixation noise multiplier once the displayed cursor reads on-center and
# the eye anchors on it instead of steering
ANCHORED_JITTER_FRACTION = 0.2

# visible error (px) below which the agent stops issuing corrections
CENTERED_TOL_PX = 1.0

RESULT_COLUMNS = ("participant", "condition", "trial", "target", "completion_ms", "timeout_flag")


@dataclass(frozen=True)
class AgentParams:
    """Synthetic gaze behavior constants.

    saccade_gain is the fraction of the visible error a corrective
    micro-saccade removes; jitter_px the fixation noise while steering
    (45 px at a typical 60 px/degree view is about 0.75 degrees, the
    scatter of an uncalibrated webcam gaze signal); undershoot_px the
    landing error of the initial ballistic saccade. seed drives the
    agent's private sample stream when the caller does not supply one.
    """

    saccade_gain: float = 0.6
    jitter_px: float = 45.0
    undershoot_px: float = 30.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.saccade_gain <= 1.0:
            raise ValueError(f"saccade_gain must be in (0, 1], got {self.saccade_gain}")
        if not self.jitter_px >= 0.0:
            raise ValueError(f"jitter_px must be >= 0, got {self.jitter_px}")
        if not self.undershoot_px >= 0.0:
            raise ValueError(f"undershoot_px must be >= 0, got {self.undershoot_px}")


@dataclass(frozen=True)
class TrialResult:
    participant: int
    condition: str
    trial: int
    target: str
    completion_ms: float
    timeout_flag: bool

    def row(self) -> list:
        return [
            self.participant,
            self.condition,
            self.trial,
            self.target,
            repr(self.completion_ms),
            int(self.timeout_flag),
        ]


@dataclass(frozen=True)
class ExperimentReport:
    """Summary across a results table; means are pooled over all trials."""

    n_trials: dict[str, int]
    mean_ms: dict[str, float]
    median_ms: dict[str, float]
    sd_ms: dict[str, float]
    timeouts: dict[str, int]
    improvement: float
    one_way: AnovaResult
    repeated: AnovaResult
    participant_means: dict[str, list[float]]

    def to_text(self) -> str:
        lines = ["condition    n     mean_ms   median_ms       sd_ms  timeouts"]
        for cond in CONDITIONS:
            lines.append(
                f"{cond:<9} {self.n_trials[cond]:>4}  {self.mean_ms[cond]:>10.1f}"
                f"  {self.median_ms[cond]:>10.1f}  {self.sd_ms[cond]:>10.1f}"
                f"  {self.timeouts[cond]:>8}"
            )
        lines.append("")
        lines.append(
            f"improvement: {100.0 * self.improvement:.1f}% faster with snapping ON"
        )
        ow, rm = self.one_way, self.repeated
        lines.append(
            f"one-way ANOVA on participant means: F({ow.df1}, {ow.df2}) = {ow.F:.4f}, p = {ow.p:.6g}"
        )
        lines.append(
            f"repeated-measures ANOVA:            F({rm.df1}, {rm.df2}) = {rm.F:.4f}, p = {rm.p:.6g}"
        )
        return "\n".join(lines)


def improvement_fraction(mean_off: float, mean_on: float) -> float:
    """Relative speedup of ON over OFF: (OFF - ON) / OFF."""
    if mean_off <= 0.0:
        raise ValueError(f"mean_off must be positive, got {mean_off}")
    return (mean_off - mean_on) / mean_off


def default_frame() -> DetectionFrame:
    """The packaged tabletop scene as a camera detection frame."""
    return detector_frame(default_scene(), default_homography(), t=0.0)


def run_agent_trial(
    agent: AgentParams,
    frame: DetectionFrame,
    target_id: str,
    condition: str,
    rng: np.random.Generator | None = None,
    view: ViewMapping | None = None,
    filter_params: FilterParams | None = None,
    dwell_config: DwellConfig | None = None,
    hysteresis: float = 0.10,
    rate_hz: float = 30.0,
    timeout_ms: float = 30_000.0,
    start: ScreenPoint | None = None,
) -> tuple[float, bool, int]:
    """One fixation trial; returns (completion_ms, timed_out, dwell_resets).

    The agent aims at the target box center through the real pipeline
    until the dwell Pick fires on that object or timeout_ms elapses.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}, got {condition}")
    target = frame.box(target_id)
    if target is None:
        raise ValueError(f"frame has no box {target_id}")
    if rng is None:
        rng = np.random.default_rng(agent.seed)
    view = view or ViewMapping()
    snap_fn = snap if condition == CONDITION_ON else snap_disabled

    t_cx, t_cy, _, _ = view.box_to_screen(target)
    dt = 1000.0 / rate_hz
    anchored_sigma = agent.jitter_px * ANCHORED_JITTER_FRACTION

    if start is None:
        start = ScreenPoint(
            float(640.0 + rng.uniform(-100.0, 100.0)),
            float(360.0 + rng.uniform(-100.0, 100.0)),
        )
    intent_x, intent_y = start.x, start.y

    filt = filter_init(start, 0.0, filter_params or FilterParams())
    dwell = dwell_init(dwell_config or DwellConfig())
    cursor = snap_fn(start, frame, view, None, hysteresis)
    dwell, _ = dwell_tick(dwell, cursor, 0.0)

    resets = 0
    prev_target = cursor.target_id
    t = 0.0
    step = 0
    while t < timeout_ms:
        t += dt
        step += 1
        if step == 1:
            # ballistic saccade onto the target with landing error
            intent_x = t_cx + rng.normal(0.0, agent.undershoot_px)
            intent_y = t_cy + rng.normal(0.0, agent.undershoot_px)
            sigma = agent.jitter_px
        else:
            err_x = t_cx - cursor.snapped.x
            err_y = t_cy - cursor.snapped.y
            if math.hypot(err_x, err_y) > CENTERED_TOL_PX:
                intent_x += agent.saccade_gain * err_x
                intent_y += agent.saccade_gain * err_y
                sigma = agent.jitter_px
            else:
                # fixation settles onto the visible cursor, not wherever
                # the aim point happened to be when the error vanished
                intent_x += agent.saccade_gain * (cursor.snapped.x - intent_x)
                intent_y += agent.saccade_gain * (cursor.snapped.y - intent_y)
                sigma = anchored_sigma

        measured = ScreenPoint(
            intent_x + rng.normal(0.0, sigma), intent_y + rng.normal(0.0, sigma)
        )
        filt, smoothed = filter_step(filt, measured, t)
        cursor = snap_fn(smoothed, frame, view, cursor.target_id, hysteresis)

        had_progress = dwell.since_ms is not None and dwell.target_id == target_id
        dwell, request = dwell_tick(dwell, cursor, t)
        if had_progress and (dwell.since_ms is None or dwell.target_id != target_id):
            resets += 1
        if request is not None:
            if request.kind == "pick" and request.object_id == target_id:
                return t, False, resets
            # a pick fired on the wrong object; drop it and keep aiming
            dwell = dwell_init(dwell.config)
    return timeout_ms, True, resets


def _target_sequence(frame: DetectionFrame, n_trials: int, rng: np.random.Generator) -> list[str]:
    """Balanced random object order: every object appears nearly equally."""
    ids = sorted(b.id for b in frame.boxes)
    repeats = math.ceil(n_trials / len(ids))
    pool = ids * repeats
    order = rng.permutation(len(pool))
    return [pool[i] for i in order[:n_trials]]


def run_experiment(
    n_participants: int = 13,
    n_trials: int = 40,
    seed: int = 0,
    frame: DetectionFrame | None = None,
    agent: AgentParams | None = None,
    timeout_ms: float = 30_000.0,
    rate_hz: float = 30.0,
    fixed_order: bool = False,
) -> list[TrialResult]:
    """Full two-condition study; returns one row per trial.

    Every participant runs n_trials fixations under both conditions. Each
    (participant, condition) pair draws from its own seeded random stream,
    keyed by condition identity, so a given seed reproduces the same
    numbers whichever order the blocks run in. Condition order per
    participant is itself randomized unless fixed_order, which always runs
    OFF first the way the original protocol did.
    """
    if n_participants < 1 or n_trials < 1:
        raise ValueError("need at least one participant and one trial")
    frame = frame or default_frame()
    agent = agent or AgentParams()

    root = np.random.SeedSequence(seed)
    participant_seeds = root.spawn(n_participants)
    results: list[TrialResult] = []
    for p_index, p_seed in enumerate(participant_seeds, start=1):
        order_seed, *cond_seeds = p_seed.spawn(1 + len(CONDITIONS))
        stream = dict(zip(CONDITIONS, cond_seeds))
        if fixed_order:
            order = list(CONDITIONS)
        else:
            order_rng = np.random.default_rng(order_seed)
            order = [CONDITIONS[i] for i in order_rng.permutation(len(CONDITIONS))]
        for cond in order:
            rng = np.random.default_rng(stream[cond])
            targets = _target_sequence(frame, n_trials, rng)
            for trial_index, target_id in enumerate(targets, start=1):
                completion, timed_out, _ = run_agent_trial(
                    agent,
                    frame,
                    target_id,
                    cond,
                    rng,
                    timeout_ms=timeout_ms,
                    rate_hz=rate_hz,
                )
                results.append(
                    TrialResult(
                        participant=p_index,
                        condition=cond,
                        trial=trial_index,
                        target=target_id,
                        completion_ms=completion,
                        timeout_flag=timed_out,
                    )
                )
    return results


def summarize_experiment(results: Sequence[TrialResult]) -> ExperimentReport:
    """Pooled statistics plus both ANOVA variants over participant means."""
    by_condition: dict[str, list[TrialResult]] = {c: [] for c in CONDITIONS}
    for r in results:
        if r.condition not in by_condition:
            raise ValueError(f"unknown condition {r.condition!r}")
        by_condition[r.condition].append(r)
    for cond in CONDITIONS:
        if not by_condition[cond]:
            raise ValueError(f"no trials for condition {cond}; need both conditions")

    mean_ms = {}
    median_ms = {}
    sd_ms = {}
    n_trials = {}
    timeouts = {}
    participant_means: dict[str, list[float]] = {}
    participants = sorted({r.participant for r in results})
    for cond in CONDITIONS:
        times = np.array([r.completion_ms for r in by_condition[cond]])
        n_trials[cond] = len(times)
        mean_ms[cond] = float(times.mean())
        median_ms[cond] = float(np.median(times))
        sd_ms[cond] = float(times.std(ddof=1)) if len(times) > 1 else 0.0
        timeouts[cond] = sum(r.timeout_flag for r in by_condition[cond])
        per_participant = []
        for p in participants:
            own = [r.completion_ms for r in by_condition[cond] if r.participant == p]
            if not own:
                raise ValueError(f"participant {p} has no {cond} trials")
            per_participant.append(float(np.mean(own)))
        participant_means[cond] = per_participant

    one_way = one_way_anova([participant_means[c] for c in CONDITIONS])
    table = [
        [participant_means[c][i] for c in CONDITIONS] for i in range(len(participants))
    ]
    repeated = repeated_measures_anova(table)

    return ExperimentReport(
        n_trials=n_trials,
        mean_ms=mean_ms,
        median_ms=median_ms,
        sd_ms=sd_ms,
        timeouts=timeouts,
        improvement=improvement_fraction(mean_ms[CONDITION_OFF], mean_ms[CONDITION_ON]),
        one_way=one_way,
        repeated=repeated,
        participant_means=participant_means,
    )


def write_results_csv(results: Sequence[TrialResult], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow(r.row())


def read_results_csv(path: str) -> list[TrialResult]:
    results = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        for row in reader:
            results.append(
                TrialResult(
                    participant=int(row[0]),
                    condition=row[1],
                    trial=int(row[2]),
                    target=row[3],
                    completion_ms=float(row[4]),
                    timeout_flag=bool(int(row[5])),
                )
            )
    return results


def write_boxplot_csv(results: Sequence[TrialResult], path: str) -> None:
    """Long-format export, one row per trial: condition, completion, ids."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("condition", "completion_ms", "participant", "trial"))
        for r in results:
            writer.writerow([r.condition, repr(r.completion_ms), r.participant, r.trial])
