"""Session orchestration: phase protocol, adaptation loop, safety guard, persistence.

A session alternates relax phases (no stimulus, calibration) with anxious
phases in which an adapter retunes the spider every step interval from the
discretized skin-conductance estimate.  The driver advances in virtual time;
a service can pace it against the wall clock and inject commands between
steps.
"""

from __future__ import annotations

import json
import os
import queue
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .agents import (
    AdapterDecision,
    QLearningAdapter,
    QLearningParams,
    RulesAdapter,
)
from .content import Action, SpiderConfig
from .patients import ExposureState, Patient, PatientModel, latent_anxiety, step_exposure
from .reward import (
    DEFAULT_SCHEDULE,
    DesiredSchedule,
    MAX_LEVEL,
    RewardParams,
    desired_at,
    reward as reward_fn,
    segment_index_at,
)
from .signals import (
    Calibration,
    DEFAULT_SAMPLE_RATE_HZ,
    EdaTrace,
    TraceError,
    calibrate,
    read_trace,
    scl_level,
    write_trace,
)

DEFAULT_STEP_INTERVAL_S = 4.0
DEFAULT_RELAX_S = 120.0
DEFAULT_ANXIOUS_S = 280.0


@dataclass(frozen=True)
class SafetyPolicy:
    max_level: int = MAX_LEVEL
    consecutive_steps: int = 2

    def __post_init__(self) -> None:
        if self.consecutive_steps < 1:
            raise ValueError("consecutive_steps must be >= 1")


def safety_check(recent_estimates: list[int], policy: SafetyPolicy) -> bool:
    """True = terminate: the last consecutive_steps estimates all hit max_level."""
    n = policy.consecutive_steps
    if len(recent_estimates) < n:
        return False
    return all(e >= policy.max_level for e in recent_estimates[-n:])


@dataclass(frozen=True)
class Phase:
    kind: str  # "relax" | "anxious"
    duration_s: float
    schedule: Optional[DesiredSchedule] = None
    adapter: Optional[str] = None  # "rl" | "rules", anxious phases only

    def __post_init__(self) -> None:
        if self.kind not in ("relax", "anxious"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.duration_s <= 0:
            raise ValueError("phase duration must be positive")
        if self.kind == "anxious":
            if self.schedule is None or self.adapter not in ("rl", "rules"):
                raise ValueError("anxious phases need a schedule and an adapter tag")
            if abs(self.schedule.total_duration_s - self.duration_s) > 1e-9:
                raise ValueError("schedule must cover the anxious phase exactly")


@dataclass(frozen=True)
class SessionPlan:
    phases: tuple[Phase, ...]
    step_interval_s: float = DEFAULT_STEP_INTERVAL_S
    initial_config: SpiderConfig = SpiderConfig(0, 0, 0, 0, 0, 0)
    safety: SafetyPolicy = SafetyPolicy()

    def __post_init__(self) -> None:
        if not self.phases:
            raise ValueError("plan needs at least one phase")
        if self.step_interval_s <= 0:
            raise ValueError("step interval must be positive")

    def to_json(self) -> dict:
        return {
            "phases": [
                {
                    "kind": p.kind,
                    "duration_s": p.duration_s,
                    "schedule": p.schedule.to_json() if p.schedule else None,
                    "adapter": p.adapter,
                }
                for p in self.phases
            ],
            "step_interval_s": self.step_interval_s,
            "initial_config": self.initial_config.to_list(),
            "safety": {"max_level": self.safety.max_level, "consecutive_steps": self.safety.consecutive_steps},
        }

    @classmethod
    def from_json(cls, data: dict) -> "SessionPlan":
        phases = tuple(
            Phase(
                kind=p["kind"],
                duration_s=float(p["duration_s"]),
                schedule=DesiredSchedule.from_json(p["schedule"]) if p.get("schedule") else None,
                adapter=p.get("adapter"),
            )
            for p in data["phases"]
        )
        safety = data.get("safety", {})
        return cls(
            phases=phases,
            step_interval_s=float(data.get("step_interval_s", DEFAULT_STEP_INTERVAL_S)),
            initial_config=SpiderConfig.from_values(data.get("initial_config", [0] * 6)),
            safety=SafetyPolicy(
                max_level=int(safety.get("max_level", MAX_LEVEL)),
                consecutive_steps=int(safety.get("consecutive_steps", 2)),
            ),
        )


def default_plan(first_adapter: str = "rl", schedule: DesiredSchedule = DEFAULT_SCHEDULE) -> SessionPlan:
    """Relax 120 s, anxious 280 s (A), relax 120 s, anxious 280 s (B)."""
    second = "rules" if first_adapter == "rl" else "rl"
    return SessionPlan(
        phases=(
            Phase("relax", DEFAULT_RELAX_S),
            Phase("anxious", DEFAULT_ANXIOUS_S, schedule, first_adapter),
            Phase("relax", DEFAULT_RELAX_S),
            Phase("anxious", DEFAULT_ANXIOUS_S, schedule, second),
        )
    )


def single_phase_plan(
    adapter: str,
    schedule: DesiredSchedule,
    relax_s: float = DEFAULT_RELAX_S,
    step_interval_s: float = DEFAULT_STEP_INTERVAL_S,
) -> SessionPlan:
    return SessionPlan(
        phases=(
            Phase("relax", relax_s),
            Phase("anxious", schedule.total_duration_s, schedule, adapter),
        ),
        step_interval_s=step_interval_s,
    )


@dataclass(frozen=True)
class StepRecord:
    t_s: float  # session time at the decision instant
    phase_index: int
    phase_t_s: float  # time within the anxious phase at the block start
    config: SpiderConfig  # config shown during the evaluated block
    estimate: int
    desired: int
    reward: float
    action: Optional[Action]  # chosen for the next block; None = identity
    method: str


@dataclass
class SessionTrace:
    steps: list[StepRecord]
    eda: EdaTrace
    suds: list[tuple[float, int]]
    meta: dict

    @property
    def outcome(self) -> str:
        return self.meta.get("outcome", "unknown")


class SessionError(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineParams:
    reward: RewardParams = RewardParams()
    qlearning: QLearningParams = QLearningParams()
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    reset_q_between_segments: bool = False


class SessionDriver:
    """Steps one session in virtual time.

    One call to step() advances a single step interval.  Commands injected via
    the queue are drained at each step boundary, so no step ever sees a
    half-applied command.
    """

    def __init__(
        self,
        patient_model: Optional[PatientModel],
        plan: SessionPlan,
        params: EngineParams = EngineParams(),
        seed: int = 0,
        manual: bool = False,
    ):
        if patient_model is None and not manual:
            raise SessionError("need a patient model unless running in manual-SUDs mode")
        self.plan = plan
        self.params = params
        self.seed = seed
        self.manual = manual
        self.patient = (
            Patient(patient_model, rng_seed=_sub_seed(seed, 1), sample_rate_hz=params.sample_rate_hz)
            if patient_model is not None
            else None
        )
        self.model = patient_model
        self.noise_rng = np.random.default_rng(_sub_seed(seed, 4))
        self.adapters = {
            "rl": QLearningAdapter(
                params=QLearningParams(
                    epsilon=params.qlearning.epsilon,
                    alpha=params.qlearning.alpha,
                    gamma=params.qlearning.gamma,
                    rng_seed=_sub_seed(seed, 2),
                ),
                reward_params=params.reward,
                reset_between_segments=params.reset_q_between_segments,
            ),
            "rules": RulesAdapter(rng_seed=_sub_seed(seed, 3)),
        }
        self.commands: "queue.Queue[dict]" = queue.Queue()

        self.t = 0.0
        self.phase_index = 0
        self.phase_t = 0.0
        self.config: Optional[SpiderConfig] = None
        self.exposure = ExposureState()
        self.calibration: Optional[Calibration] = None
        self.steps: list[StepRecord] = []
        self.eda_parts: list[EdaTrace] = []
        self.suds: list[tuple[float, int]] = []
        self.recent_estimates: list[int] = []
        self.outcome: Optional[str] = None  # None while running
        self.desired_override: Optional[int] = None
        self._phase_eda: list[EdaTrace] = []
        self._config_changed = False
        self._segment_index: Optional[int] = None
        self._method_override: Optional[str] = None
        self._manual_level = 0
        self.last_reward: Optional[float] = None
        self.last_decision: Optional[AdapterDecision] = None
        self.last_estimate: Optional[int] = None

    # -- command handling ---------------------------------------------------

    def submit(self, command: dict) -> None:
        self.commands.put(command)

    def _drain_commands(self) -> None:
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                return
            kind = cmd.get("command")
            if kind == "set_desired":
                level = int(cmd["level"])
                if not 0 <= level <= MAX_LEVEL:
                    raise SessionError(f"set_desired level {level} outside 0..10")
                self.desired_override = level
            elif kind == "switch_method":
                method = cmd["method"]
                if method not in ("rl", "rules"):
                    raise SessionError(f"unknown method {method!r}")
                self._method_override = method
            elif kind == "submit_suds":
                value = int(cmd["value"])
                if not 0 <= value <= 100:
                    raise SessionError(f"SUDs value {value} outside 0..100")
                self.suds.append((self.t, value))
                self._manual_level = int(round(value / 10))
            elif kind == "abort":
                self._finish("operator-abort")
            else:
                raise SessionError(f"unknown command {kind!r}")

    # -- stepping -----------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.outcome is not None

    @property
    def phase(self) -> Optional[Phase]:
        if self.phase_index < len(self.plan.phases):
            return self.plan.phases[self.phase_index]
        return None

    def step(self) -> None:
        """Advance one step interval of virtual time."""
        if self.done:
            raise SessionError("session already finished")
        self._drain_commands()
        if self.done:  # abort command
            return
        phase = self.phase
        dt = self.plan.step_interval_s
        if phase.kind == "relax":
            self._relax_block(dt)
        else:
            self._anxious_block(phase, dt)
        self.t += dt
        self.phase_t += dt
        if not self.done and self.phase_t >= phase.duration_s - 1e-9:
            self._end_phase(phase)

    def _emit_block(self, anxiety: float, dt: float) -> Optional[EdaTrace]:
        if self.patient is None:
            return None
        ts, cs = self.patient.emit(anxiety, dt)
        block = EdaTrace(ts, cs)
        self.eda_parts.append(block)
        self._phase_eda.append(block)
        return block

    def _relax_block(self, dt: float) -> None:
        if self.patient is not None:
            anxiety = latent_anxiety(self.model, None, rng=self.noise_rng)
            self._emit_block(anxiety, dt)

    def _anxious_block(self, phase: Phase, dt: float) -> None:
        if self.config is None:
            self.config = self.plan.initial_config
            self.exposure = ExposureState()
            self._config_changed = False
            self._segment_index = None
        block_start = self.phase_t
        # segment boundary bookkeeping for the RL adapter
        seg = segment_index_at(phase.schedule, block_start)
        if self._segment_index is not None and seg != self._segment_index:
            self.adapters["rl"].segment_reset()
        self._segment_index = seg

        if self.patient is not None:
            self.exposure = step_exposure(self.exposure, self.model, self._config_changed, dt)
            anxiety = latent_anxiety(self.model, self.config, self.exposure, rng=self.noise_rng)
            block = self._emit_block(anxiety, dt)
            if self.calibration is None:
                raise SessionError("anxious phase reached without calibration")
            estimate = scl_level(block, self.calibration)
        else:
            estimate = self._manual_level

        desired = self.desired_override
        if desired is None:
            desired = desired_at(phase.schedule, block_start)

        method = self._method_override or phase.adapter
        adapter = self.adapters[method]
        decision = adapter.step(estimate, desired, self.config)
        r = reward_fn(estimate, desired, self.params.reward)

        self.steps.append(
            StepRecord(
                t_s=self.t + dt,
                phase_index=self.phase_index,
                phase_t_s=block_start,
                config=self.config,
                estimate=estimate,
                desired=desired,
                reward=r,
                action=decision.action,
                method=method,
            )
        )
        self.last_reward = r
        self.last_decision = decision
        self.last_estimate = estimate

        self.recent_estimates.append(estimate)
        if safety_check(self.recent_estimates, self.plan.safety):
            self._finish("safety-terminated")
            return

        self._config_changed = decision.action is not None
        self.config = decision.new_config

    def _end_phase(self, phase: Phase) -> None:
        if phase.kind == "relax" and self.patient is not None:
            relax_trace = EdaTrace.concat(self._phase_eda)
            try:
                self.calibration = calibrate(relax_trace)
            except TraceError:
                if self.calibration is None:
                    raise
        if phase.kind == "anxious":
            self.config = None
            self.recent_estimates = []
            self.adapters["rl"].phase_reset()
            self.desired_override = None  # operator override ends at phase boundary
        self._phase_eda = []
        self.phase_index += 1
        self.phase_t = 0.0
        if self.phase_index >= len(self.plan.phases):
            self._finish("completed")

    def _finish(self, outcome: str) -> None:
        self.outcome = outcome

    def run(self) -> SessionTrace:
        while not self.done:
            self.step()
        return self.trace()

    def trace(self) -> SessionTrace:
        meta = {
            "plan": self.plan.to_json(),
            "seed": self.seed,
            "manual": self.manual,
            "patient": self.model.to_json() if self.model else None,
            "params": {
                "reward_sigma": self.params.reward.sigma,
                "epsilon": self.params.qlearning.epsilon,
                "alpha": self.params.qlearning.alpha,
                "gamma": self.params.qlearning.gamma,
                "sample_rate_hz": self.params.sample_rate_hz,
            },
            "outcome": self.outcome or "running",
            "terminal": self.outcome in ("safety-terminated", "operator-abort"),
        }
        return SessionTrace(
            steps=list(self.steps),
            eda=EdaTrace.concat(self.eda_parts),
            suds=list(self.suds),
            meta=meta,
        )


def _sub_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence(entropy=[seed, stream]).generate_state(1)[0])


def run_session(
    patient_model: Optional[PatientModel],
    plan: SessionPlan,
    params: EngineParams = EngineParams(),
    seed: int = 0,
) -> SessionTrace:
    return SessionDriver(patient_model, plan, params, seed).run()


@dataclass
class ExperimentResults:
    traces: list[tuple[str, SessionTrace]]  # (patient name, trace)
    failures: list[tuple[str, str]]  # (patient name, error)

    def by_patient(self) -> dict[str, SessionTrace]:
        return dict(self.traces)


def run_experiment(
    population: list[PatientModel],
    params: EngineParams = EngineParams(),
    seed: int = 0,
    schedule: DesiredSchedule = DEFAULT_SCHEDULE,
) -> ExperimentResults:
    """Two-session counterbalanced comparison over a population.

    Even-indexed patients run RL first, odd-indexed rules first.
    """
    if not population:
        raise ValueError("population must be nonempty")
    traces: list[tuple[str, SessionTrace]] = []
    failures: list[tuple[str, str]] = []
    for i, model in enumerate(population):
        first = "rl" if i % 2 == 0 else "rules"
        plan = default_plan(first, schedule)
        try:
            trace = run_session(model, plan, params, seed=_sub_seed(seed, 100 + i))
            traces.append((model.name, trace))
        except Exception as exc:  # individual failures recorded, run continues
            failures.append((model.name, f"{type(exc).__name__}: {exc}"))
    return ExperimentResults(traces=traces, failures=failures)


# -- persistence ------------------------------------------------------------

STEPS_HEADER = ["t_s", "config", "estimate", "desired", "reward", "action", "method"]


def save_trace(dir_path: Path | str, trace: SessionTrace) -> Path:
    """Persist as a directory: meta.json, steps.csv, eda.csv, optional suds.csv.

    Written to a temp directory first, then renamed into place.
    """
    dir_path = Path(dir_path)
    dir_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=dir_path.parent, prefix=".tmp-trace-"))
    try:
        with open(tmp / "meta.json", "w") as f:
            json.dump(trace.meta, f, indent=2, sort_keys=True)
            f.write("\n")
        import csv as _csv

        with open(tmp / "steps.csv", "w", newline="\n") as f:
            writer = _csv.writer(f, lineterminator="\n")
            writer.writerow(STEPS_HEADER)
            for s in trace.steps:
                writer.writerow(
                    [
                        f"{s.t_s:.3f}",
                        json.dumps(s.config.to_list(), separators=(",", ":")),
                        s.estimate,
                        s.desired,
                        f"{s.reward:.6f}",
                        s.action.label() if s.action else "",
                        s.method,
                    ]
                )
        if len(trace.eda):
            write_trace(tmp / "eda.csv", trace.eda)
        if trace.suds:
            with open(tmp / "suds.csv", "w", newline="\n") as f:
                writer = _csv.writer(f, lineterminator="\n")
                writer.writerow(["t_s", "suds"])
                for t, v in trace.suds:
                    writer.writerow([f"{t:.3f}", v])
        if dir_path.exists():
            raise FileExistsError(f"trace directory already exists: {dir_path}")
        os.rename(tmp, dir_path)
    finally:
        if tmp.exists():
            import shutil

            shutil.rmtree(tmp, ignore_errors=True)
    return dir_path


def load_trace(dir_path: Path | str) -> SessionTrace:
    dir_path = Path(dir_path)
    meta_path = dir_path / "meta.json"
    steps_path = dir_path / "steps.csv"
    if not meta_path.exists() or not steps_path.exists():
        raise TraceError(f"{dir_path}: not a trace directory (need meta.json and steps.csv)")
    with open(meta_path) as f:
        meta = json.load(f)
    plan = SessionPlan.from_json(meta["plan"]) if "plan" in meta else None

    def _locate(t_decision: float) -> tuple[int, float]:
        # Map a decision instant back to (phase index, block-start time in phase).
        if plan is None:
            return -1, -1.0
        block_start = t_decision - plan.step_interval_s
        elapsed = 0.0
        for i, p in enumerate(plan.phases):
            if block_start < elapsed + p.duration_s - 1e-9:
                return i, block_start - elapsed
            elapsed += p.duration_s
        return len(plan.phases) - 1, block_start - elapsed

    import csv as _csv

    steps: list[StepRecord] = []
    with open(steps_path, newline="") as f:
        reader = _csv.reader(f)
        header = next(reader, None)
        if header != STEPS_HEADER:
            raise TraceError(f"{steps_path}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                config = SpiderConfig.from_values(json.loads(row[1]))
                action = Action.from_label(row[5]) if row[5] else None
                t_s = float(row[0])
                phase_index, phase_t_s = _locate(t_s)
                steps.append(
                    StepRecord(
                        t_s=t_s,
                        phase_index=phase_index,
                        phase_t_s=phase_t_s,
                        config=config,
                        estimate=int(row[2]),
                        desired=int(row[3]),
                        reward=float(row[4]),
                        action=action,
                        method=row[6],
                    )
                )
            except (ValueError, TypeError, IndexError, json.JSONDecodeError) as exc:
                raise TraceError(f"{steps_path}: malformed row at line {lineno}") from exc
    eda_path = dir_path / "eda.csv"
    eda = read_trace(eda_path) if eda_path.exists() else EdaTrace(np.array([]), np.array([]))
    suds: list[tuple[float, int]] = []
    suds_path = dir_path / "suds.csv"
    if suds_path.exists():
        with open(suds_path, newline="") as f:
            reader = _csv.reader(f)
            next(reader, None)
            for row in reader:
                if row:
                    suds.append((float(row[0]), int(row[1])))
    return SessionTrace(steps=steps, eda=eda, suds=suds, meta=meta)
