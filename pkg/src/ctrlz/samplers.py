"""The five sampling strategies with exact forward-pass accounting.

All strategies share the guided analytic denoiser and the step operators.
Stochastic strategies derive every noise draw from a stream keyed by
(seed, step, depth, candidate), so reruns are bit-identical regardless of
how many workers evaluate candidates.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import GuidanceConfig, GuidanceMode, LatentState, ddim_step, deterministic_invert, stochastic_invert
from .models import Condition, EvalContext, GaussianMixture, predict
from .rewards import RewardSpec, score
from .schedule import NoiseSchedule
from .seeding import keyed_rng


class InitiationPolicy(enum.Enum):
    REWARD_BASED = "reward_based"
    ALWAYS = "always"
    RANDOM = "random"


class ExplorationGuidance(enum.Enum):
    SAME = "same"
    CFG_IN_EXPLORATION = "cfg_in_exploration"


class TerminatedBy(enum.Enum):
    THRESHOLD_MET = "threshold_met"
    DEPTH_CAP = "depth_cap"


@dataclass(frozen=True)
class CtrlZParams:
    """Knobs of the adaptive zigzag search.

    ``window`` is the number of initial (high-noise) steps eligible for
    exploration; ``threshold`` the minimum improvement over the last accepted
    score; ``max_depth`` the deepest inversion tried before giving up;
    ``n_candidates`` the number of re-noised continuations per depth.
    ``random_p`` only applies under the RANDOM initiation policy.
    ``exploration_guidance`` may switch candidate denoising back to plain CFG
    while default steps keep the configured mode.
    """

    window: int = 40
    threshold: float = 0.0
    max_depth: int = 3
    n_candidates: int = 4
    initiation: InitiationPolicy = InitiationPolicy.REWARD_BASED
    random_p: float = 0.5
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    exploration_guidance: ExplorationGuidance = ExplorationGuidance.SAME

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if not 0.0 <= self.random_p <= 1.0:
            raise ValueError("random_p must lie in [0, 1]")


@dataclass(frozen=True)
class ExplorationEvent:
    """Record of one triggered exploration.

    ``depths_tried`` counts escalation iterations; ``terminal_depth`` is the
    actual inversion distance used on the last iteration (the step-boundary
    clamp can make it smaller than ``depths_tried``).
    """

    t: int
    trigger: str
    depths_tried: int
    candidates_evaluated: int
    terminal_depth: int
    terminated_by: TerminatedBy
    accepted_score: float
    default_score: float


@dataclass(eq=False)
class RunResult:
    """Outcome of one trajectory: final sample, traces, and exact accounting."""

    x0: np.ndarray
    reward_trace: list[float]
    events: list[ExplorationEvent]
    nfe_total: int
    nfe_avg: float
    reward_calls: int
    seed: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunResult):
            return NotImplemented
        return (
            np.array_equal(self.x0, other.x0)
            and self.reward_trace == other.reward_trace
            and self.events == other.events
            and self.nfe_total == other.nfe_total
            and self.nfe_avg == other.nfe_avg
            and self.reward_calls == other.reward_calls
            and self.seed == other.seed
        )


def _advance(
    ctx: EvalContext,
    state: LatentState,
    cond: Condition,
    mix: GaussianMixture,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
) -> tuple[LatentState, np.ndarray]:
    """One guided denoising step; CFG++ re-noises with the unconditional branch."""
    pred = predict(ctx, state, cond, mix, guidance, sched)
    if guidance.mode is GuidanceMode.CFG_PLUS_PLUS:
        eps_noise = pred.eps_uncond
    else:
        eps_noise = pred.eps
    return ddim_step(state, pred.eps, eps_noise, sched)


def _scored(ctx: EvalContext, reward: RewardSpec, cond: Condition, x0_hat: np.ndarray) -> float:
    ctx.add_reward_call()
    return score(reward, cond, x0_hat)


def _check_start(x_T: LatentState, sched: NoiseSchedule) -> None:
    if x_T.t != sched.num_steps:
        raise ValueError(f"start state must sit at level {sched.num_steps}, got {x_T.t}")


def _finish(
    x0: LatentState,
    trace: list[float],
    events: list[ExplorationEvent],
    ctx: EvalContext,
    nfe_start: int,
    reward_start: int,
    sched: NoiseSchedule,
    seed: int,
) -> RunResult:
    nfe_total = ctx.nfe_count - nfe_start
    return RunResult(
        x0=x0.x,
        reward_trace=trace,
        events=events,
        nfe_total=nfe_total,
        nfe_avg=nfe_total / sched.num_steps,
        reward_calls=ctx.reward_calls - reward_start,
        seed=seed,
    )


def run_ddim(
    ctx: EvalContext,
    x_T: LatentState,
    cond: Condition,
    mix: GaussianMixture,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
    reward: RewardSpec | None = None,
    seed: int = 0,
) -> RunResult:
    """Plain deterministic sampling; exactly one forward pass per step."""
    _check_start(x_T, sched)
    nfe0, rc0 = ctx.nfe_count, ctx.reward_calls
    trace: list[float] = []
    state = x_T
    for _t in range(sched.num_steps, 0, -1):
        state, x0_hat = _advance(ctx, state, cond, mix, guidance, sched)
        if reward is not None:
            trace.append(_scored(ctx, reward, cond, x0_hat))
    return _finish(state, trace, [], ctx, nfe0, rc0, sched, seed)


def run_resampling(
    ctx: EvalContext,
    x_T: LatentState,
    cond: Condition,
    mix: GaussianMixture,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
    seed: int = 0,
) -> RunResult:
    """Per step: denoise, re-noise one level with fresh noise, denoise again.

    The re-denoised state is always taken; two forward passes per step.
    """
    _check_start(x_T, sched)
    nfe0, rc0 = ctx.nfe_count, ctx.reward_calls
    state = x_T
    for t in range(sched.num_steps, 0, -1):
        state, _ = _advance(ctx, state, cond, mix, guidance, sched)
        noise = keyed_rng(seed, t, 0, 0).standard_normal(state.dim)
        renoised = stochastic_invert(state, 1, noise, sched)
        state, _ = _advance(ctx, renoised, cond, mix, guidance, sched)
    return _finish(state, [], [], ctx, nfe0, rc0, sched, seed)


def run_zsampling(
    ctx: EvalContext,
    x_T: LatentState,
    cond: Condition,
    mix: GaussianMixture,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
    inversion_guidance: GuidanceConfig | None = None,
    seed: int = 0,
) -> RunResult:
    """Per step: denoise, deterministically re-invert along a weakly guided
    prediction, then denoise again; fully deterministic, three passes per step.

    The inversion prediction defaults to unconditional (scale 0).
    """
    _check_start(x_T, sched)
    inv = inversion_guidance if inversion_guidance is not None else GuidanceConfig(0.0, GuidanceMode.CFG)
    nfe0, rc0 = ctx.nfe_count, ctx.reward_calls
    state = x_T
    for _t in range(sched.num_steps, 0, -1):
        lowered, _ = _advance(ctx, state, cond, mix, guidance, sched)
        pred_inv = predict(ctx, lowered, cond, mix, inv, sched)
        raised = deterministic_invert(lowered, pred_inv.eps, sched)
        state, _ = _advance(ctx, raised, cond, mix, guidance, sched)
    return _finish(state, [], [], ctx, nfe0, rc0, sched, seed)


def run_sop(
    ctx: EvalContext,
    x_T: LatentState,
    cond: Condition,
    mix: GaussianMixture,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
    reward: RewardSpec,
    n_candidates: int,
    seed: int = 0,
) -> RunResult:
    """Fixed-depth search over paths: score the default continuation plus
    ``n_candidates`` one-level re-noised continuations, keep the best.

    Ties go to the earliest candidate, so the default wins exact ties. The
    inversion distance is clamped to 0 at the top step.
    """
    _check_start(x_T, sched)
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    if reward is None:
        raise ValueError("run_sop requires a reward")
    nfe0, rc0 = ctx.nfe_count, ctx.reward_calls
    T = sched.num_steps
    trace: list[float] = []
    state = x_T
    for t in range(T, 0, -1):
        best_state, x0_hat = _advance(ctx, state, cond, mix, guidance, sched)
        best_score = _scored(ctx, reward, cond, x0_hat)
        delta = min(1, T - t)
        for i in range(1, n_candidates + 1):
            noise = keyed_rng(seed, t, 1, i).standard_normal(state.dim)
            cand = stochastic_invert(state, delta, noise, sched)
            for _k in range(t + delta, t - 1, -1):
                cand, cand_x0 = _advance(ctx, cand, cond, mix, guidance, sched)
            r = _scored(ctx, reward, cond, cand_x0)
            if r > best_score:
                best_score, best_state = r, cand
        state = best_state
        trace.append(best_score)
    return _finish(state, trace, [], ctx, nfe0, rc0, sched, seed)


def _evaluate_candidate(
    ctx: EvalContext,
    origin: LatentState,
    delta: int,
    key: tuple[int, int, int, int],
    cond: Condition,
    mix: GaussianMixture,
    guidance: GuidanceConfig,
    sched: NoiseSchedule,
    reward: RewardSpec,
) -> tuple[float, LatentState]:
    noise = keyed_rng(*key).standard_normal(origin.dim)
    cand = stochastic_invert(origin, delta, noise, sched)
    for _k in range(origin.t + delta, origin.t - 1, -1):
        cand, cand_x0 = _advance(ctx, cand, cond, mix, guidance, sched)
    return _scored(ctx, reward, cond, cand_x0), cand


def _policy_fires(params: CtrlZParams, seed: int, t: int) -> bool:
    if params.initiation is InitiationPolicy.RANDOM:
        return bool(keyed_rng(seed, t, 0, 0).uniform() < params.random_p)
    return True


def run_ctrlz(
    ctx: EvalContext,
    x_T: LatentState,
    cond: Condition,
    mix: GaussianMixture,
    sched: NoiseSchedule,
    reward: RewardSpec,
    params: CtrlZParams,
    seed: int = 0,
    workers: int = 1,
) -> RunResult:
    """Reward-guided sampling with adaptive-depth zigzag exploration.

    Within the exploration window, a step whose clean-estimate score fails to
    improve on the last accepted score by ``threshold`` triggers a search:
    re-noise the pre-step state by an escalating number of levels, denoise
    each of ``n_candidates`` fresh continuations back down, and keep the best
    scoring state seen (the default continuation is part of the pool). The
    search stops as soon as the best score clears the acceptance bar, or at
    ``max_depth``, in which case the best candidate is retained anyway and
    the accepted score may decrease.

    ALWAYS skips the acceptance pre-check and explores at every eligible
    step; RANDOM does so with probability ``random_p`` and otherwise accepts
    the step without a reward call, like a plain step. Candidates within one
    depth may be evaluated by ``workers`` threads; results are identical for
    any worker count.
    """
    _check_start(x_T, sched)
    if reward is None:
        raise ValueError("run_ctrlz requires a reward")
    T = sched.num_steps
    if params.window > T:
        raise ValueError(f"window {params.window} exceeds total steps {T}")
    explore_guidance = params.guidance
    if params.exploration_guidance is ExplorationGuidance.CFG_IN_EXPLORATION:
        explore_guidance = GuidanceConfig(params.guidance.omega, GuidanceMode.CFG)

    nfe0, rc0 = ctx.nfe_count, ctx.reward_calls
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    trace: list[float] = []
    events: list[ExplorationEvent] = []
    r_prev = -math.inf
    state = x_T
    try:
        for t in range(T, 0, -1):
            next_state, x0_hat = _advance(ctx, state, cond, mix, params.guidance, sched)
            if t > T - params.window and _policy_fires(params, seed, t):
                r = _scored(ctx, reward, cond, x0_hat)
                if params.initiation is InitiationPolicy.REWARD_BASED and r >= r_prev + params.threshold:
                    r_prev = r
                    trace.append(r)
                else:
                    best_score, best_state = r, next_state
                    depths_tried = 0
                    delta = 0
                    terminated = TerminatedBy.DEPTH_CAP
                    for inversion_step in range(1, params.max_depth + 1):
                        delta = min(inversion_step, T - t)
                        keys = [(seed, t, inversion_step, i) for i in range(1, params.n_candidates + 1)]
                        if pool is not None:
                            results = list(
                                pool.map(
                                    lambda key: _evaluate_candidate(
                                        ctx, state, delta, key, cond, mix, explore_guidance, sched, reward
                                    ),
                                    keys,
                                )
                            )
                        else:
                            results = [
                                _evaluate_candidate(
                                    ctx, state, delta, key, cond, mix, explore_guidance, sched, reward
                                )
                                for key in keys
                            ]
                        depths_tried += 1
                        for cand_score, cand_state in results:
                            if cand_score > best_score:
                                best_score, best_state = cand_score, cand_state
                        if best_score >= r_prev + params.threshold:
                            terminated = TerminatedBy.THRESHOLD_MET
                            break
                    events.append(
                        ExplorationEvent(
                            t=t,
                            trigger=params.initiation.value,
                            depths_tried=depths_tried,
                            candidates_evaluated=depths_tried * params.n_candidates,
                            terminal_depth=delta,
                            terminated_by=terminated,
                            accepted_score=best_score,
                            default_score=r,
                        )
                    )
                    next_state = best_state
                    r_prev = best_score
                    trace.append(best_score)
            state = next_state
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(state, trace, events, ctx, nfe0, rc0, sched, seed)
