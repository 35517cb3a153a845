"""Model-free actor-critic trainer for the exploratory mean-variance task.

Critic and actor are parameterized on the closed-form solution shapes:

    V_theta(t, x)  = (x-w)^2 e^{-theta2 (T-t)} - theta1 e^{theta0 (T-t)} - (w-z)^2
    policy(t, x)   = location -phi0 (x-w), scale e^{phi1/2 + phi2 (T-t)/2}

Each episode samples one wealth trajectory action by action, forms the
one-step temporal-difference errors

    delta_i = -lam p(t_i) dt + V(t_{i+1}, x_{i+1}) - V(t_i, x_i)

with p the policy's (log-)regularizer value, and applies semi-gradient
updates: the critic moves along -sum dV/dtheta * delta_i, the actor along
the score-function sum plus the explicit regularizer gradient.  Targets
are frozen (no gradient flows through V at t_{i+1}).  A stochastic
approximation step moves the multiplier w toward the wealth target every
``avg_window`` episodes.  Update magnitudes decay like j^{-decay}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closedform import MarketParams
from .distortion import DistortionFn
from .market import SimConfig, WealthPath, path_stream
from .policy import LocationScalePolicy, log_density_grad_fields, standardized_draw

_CRITIC_FORMS = ("standard", "corrected")


class TrainingDivergedError(RuntimeError):
    """A parameter became non-finite during training."""

    def __init__(self, episode: int, detail: str = ""):
        self.episode = episode
        super().__init__(f"training diverged at episode {episode}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class CriticParams:
    theta0: float
    theta1: float
    theta2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta0, self.theta1, self.theta2], dtype=float)


@dataclass(frozen=True)
class ActorParams:
    phi0: float
    phi1: float
    phi2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi0, self.phi1, self.phi2], dtype=float)


@dataclass(frozen=True)
class TrainConfig:
    """Inputs of the training loop; defaults follow the simulation study."""

    episodes: int
    h: DistortionFn
    lam: float
    mode: str
    sim: SimConfig
    z: float
    x0: float = 1.0
    avg_window: int = 10
    alpha_theta: float = 0.01
    alpha_phi: float = 0.01
    alpha_w: float = 0.01
    decay: float = 0.51
    # phi defaults give a modest initial exploration scale (about 0.4 near
    # the horizon) and a mean-reversion coefficient of 2; at the study's
    # learning rates the scale parameters barely move, so the init sets the
    # converged exploration level.
    theta_init: tuple[float, float, float] = (1.0, 0.1, 1.0)
    phi_init: tuple[float, float, float] = (2.0, -2.0, 1.0)
    w_init: float | None = None  # defaults to the wealth target z
    critic_form: str = "standard"
    grad_clip: float | None = None

    def __post_init__(self):
        if self.episodes < 1 or self.avg_window < 1:
            raise ValueError("episodes and avg_window must be >= 1")
        if min(self.alpha_theta, self.alpha_phi, self.alpha_w) <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.mode not in ("plain", "log"):
            raise ValueError(f"mode must be 'plain' or 'log', got {self.mode!r}")
        if self.critic_form not in _CRITIC_FORMS:
            raise ValueError(f"critic_form must be one of {_CRITIC_FORMS}")

    @property
    def T(self) -> float:
        return self.sim.horizon


@dataclass
class TrainLog:
    """Per-episode history of one training run; reproducible from the seed."""

    terminal_wealth: np.ndarray
    theta: np.ndarray  # (episodes, 3), post-update snapshots
    phi: np.ndarray
    w: np.ndarray
    skipped_actions: int = 0
    clip_events: int = 0

    @property
    def episodes(self) -> int:
        return len(self.terminal_wealth)

    def last_window_stats(self, window: int = 200) -> tuple[float, float, float]:
        """(mean, variance, Sharpe) of the last ``window`` terminal wealths.

        Sharpe is the study's statistic (mean - 1)/sqrt(variance), i.e.
        excess over a unit initial wealth.
        """
        tail = self.terminal_wealth[-min(window, self.episodes):]
        mean = float(np.mean(tail))
        var = float(np.var(tail, ddof=0))
        sharpe = (mean - 1.0) / math.sqrt(var) if var > 0.0 else math.inf
        return mean, var, sharpe

    def block_means(self, block: int = 100) -> np.ndarray:
        n = (self.episodes // block) * block
        if n == 0:
            return np.empty(0)
        return self.terminal_wealth[:n].reshape(-1, block).mean(axis=1)

    def rolling_mean(self, window: int = 200) -> np.ndarray:
        """Trailing mean of terminal wealth, one value per episode."""
        cums = np.concatenate([[0.0], np.cumsum(self.terminal_wealth)])
        idx = np.arange(1, self.episodes + 1)
        lo = np.maximum(idx - window, 0)
        return (cums[idx] - cums[lo]) / (idx - lo)


# ---------------------------------------------------------------------------
# Critic
# ---------------------------------------------------------------------------


def _theta_arr(theta) -> np.ndarray:
    return theta.as_array() if isinstance(theta, CriticParams) else np.asarray(theta, dtype=float)


def _phi_arr(phi) -> np.ndarray:
    return phi.as_array() if isinstance(phi, ActorParams) else np.asarray(phi, dtype=float)


def critic_value(theta, t, x, w, z, T, form: str = "standard"):
    """Parameterized value surface V_theta(t, x).

    The standard form carries a theta1 e^{theta0 (T-t)} offset whose
    terminal value is -theta1 rather than 0; "corrected" replaces it with
    theta1 (e^{theta0 (T-t)} - 1), which meets the terminal condition
    exactly.  Both share the same TD differences up to that constant.
    """
    th = _theta_arr(theta)
    tau = T - np.asarray(t, dtype=float)
    xw2 = (np.asarray(x, dtype=float) - w) ** 2
    if form == "standard":
        offset = th[1] * np.exp(th[0] * tau)
    else:
        offset = th[1] * np.expm1(th[0] * tau)
    return xw2 * np.exp(-th[2] * tau) - offset - (w - z) ** 2


def critic_grad(theta, t, x, w, T, form: str = "standard"):
    """dV_theta/dtheta, stacked on the last axis."""
    th = _theta_arr(theta)
    tau = T - np.asarray(t, dtype=float)
    xw2 = (np.asarray(x, dtype=float) - w) ** 2
    grow = np.exp(th[0] * tau)
    d0 = -th[1] * tau * grow
    d1 = -grow if form == "standard" else -np.expm1(th[0] * tau)
    d2 = -tau * xw2 * np.exp(-th[2] * tau)
    return np.stack(np.broadcast_arrays(d0, d1, d2), axis=-1)


# ---------------------------------------------------------------------------
# Actor
# ---------------------------------------------------------------------------


def actor_scale(phi, t, T):
    ph = _phi_arr(phi)
    return np.exp(0.5 * ph[1] + 0.5 * ph[2] * (T - np.asarray(t, dtype=float)))


def actor_policy(phi, t, x, w, h: DistortionFn, T) -> LocationScalePolicy:
    """The actor's action distribution at state (t, x)."""
    ph = _phi_arr(phi)
    return LocationScalePolicy(h=h, location=-ph[0] * (x - w),
                               scale=float(actor_scale(ph, t, T)))


def regularizer_schedule(phi, t, h: DistortionFn, mode: str, T):
    """Regularizer value p(t; phi) of the actor and its phi-gradient.

    plain: p = S(t) ||h'||^2 with gradient (0, p/2, p (T-t)/2);
    log:   p = phi1/2 + phi2 (T-t)/2 + 2 log ||h'||_2 with gradient
           (0, 1/2, (T-t)/2).
    """
    ph = _phi_arr(phi)
    tau = T - np.asarray(t, dtype=float)
    l2 = h.l2_norm
    if mode == "plain":
        p = np.exp(0.5 * ph[1] + 0.5 * ph[2] * tau) * l2**2
        grad = np.stack(np.broadcast_arrays(np.zeros_like(p), 0.5 * p, 0.5 * tau * p), axis=-1)
    elif mode == "log":
        p = 0.5 * ph[1] + 0.5 * ph[2] * tau + 2.0 * math.log(l2)
        zeros = np.zeros_like(p)
        grad = np.stack(np.broadcast_arrays(zeros, zeros + 0.5, 0.5 * tau), axis=-1)
    else:
        raise ValueError(f"mode must be 'plain' or 'log', got {mode!r}")
    return p, grad


# ---------------------------------------------------------------------------
# TD machinery
# ---------------------------------------------------------------------------


def td_error(theta, phi, t0, x0, t1, x1, lam, mode, h, w, z, T,
             critic_form: str = "standard") -> float:
    """One-step TD error; the t1 side is a frozen target in all gradients."""
    p, _ = regularizer_schedule(phi, t0, h, mode, T)
    dt = t1 - t0
    v0 = critic_value(theta, t0, x0, w, z, T, critic_form)
    v1 = critic_value(theta, t1, x1, w, z, T, critic_form)
    return float(-lam * p * dt + v1 - v0)


def episode_gradients(episode: WealthPath, theta, phi, w, config: TrainConfig):
    """Semi-gradient updates accumulated over one episode.

    Returns (grad_theta, grad_phi, n_skipped): the critic gradient
    -sum_i dV/dtheta(t_i) delta_i, the actor gradient
    sum_i [dlog policy(u_i) delta_i - lam dp/dphi dt], and the count of
    replayed actions that fell outside the current policy support (their
    score terms are skipped).
    """
    th, ph = _theta_arr(theta), _phi_arr(phi)
    T, lam, mode, h = config.T, config.lam, config.mode, config.h
    times, states, actions = episode.times, episode.states, episode.actions
    if actions is None or len(actions) == 0:
        return np.zeros(3), np.zeros(3), 0
    t_left, x_left = times[:-1], states[:-1]
    dts = np.diff(times)
    tau = T - t_left

    # overflow in a diverging run shows up as non-finite parameters and is
    # reported by the caller; keep the arithmetic silent here
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        v = critic_value(th, times, states, w, config.z, T, config.critic_form)
        p, dp = regularizer_schedule(ph, t_left, h, mode, T)
        delta = v[1:] - v[:-1] - lam * p * dts

        dv = critic_grad(th, t_left, x_left, w, T, config.critic_form)
        grad_theta = -dv.T @ delta

        scale = actor_scale(ph, t_left, T)
        location = -ph[0] * (x_left - w)
        dm, ds = log_density_grad_fields(h, actions, location, scale)
        in_support = np.isfinite(dm) & np.isfinite(ds)
        n_skipped = int(np.size(in_support) - np.count_nonzero(in_support))
        dm = np.where(in_support, dm, 0.0)
        ds = np.where(in_support, ds, 0.0)
        # chain rule through (M, S): M = -phi0 (x-w), S = e^{phi1/2 + phi2 tau/2}
        dlog = np.stack([-(x_left - w) * dm, 0.5 * scale * ds, 0.5 * tau * scale * ds],
                        axis=-1)
        grad_phi = dlog.T @ delta - lam * dp.T @ dts

    return grad_theta, grad_phi, n_skipped


def lagrange_update(w: float, terminal_batch, alpha_w: float, z: float) -> float:
    """Stochastic-approximation step toward the terminal wealth constraint."""
    batch = np.asarray(terminal_batch, dtype=float)
    return w - alpha_w * (float(np.mean(batch)) - z)


def _clip(vec: np.ndarray, limit: float | None) -> tuple[np.ndarray, bool]:
    if limit is None:
        return vec, False
    norm = float(np.linalg.norm(vec))
    if not math.isfinite(norm):
        return vec, False  # diverged; the parameter check reports it
    if norm > limit:
        return vec * (limit / norm), True
    return vec, False


def train(config: TrainConfig, market: MarketParams) -> TrainLog:
    """Run the episodic actor-critic loop and return the full history.

    Deterministic given config.sim.seed: episode j draws its uniforms and
    noise from a Philox stream keyed (seed, j).
    """
    n_steps, dt = config.sim.n_steps, config.sim.dt
    T, lam, h, z = config.T, config.lam, config.h, config.z
    sigma, rho = market.sigma, market.rho
    sqdt = math.sqrt(dt)
    times = config.sim.times()

    theta = np.array(config.theta_init, dtype=float)
    phi = np.array(config.phi_init, dtype=float)
    w = float(config.w_init) if config.w_init is not None else float(z)

    K = config.episodes
    tw_log = np.empty(K)
    theta_log = np.empty((K, 3))
    phi_log = np.empty((K, 3))
    w_log = np.empty(K)
    skipped = 0
    clip_events = 0

    states = np.empty(n_steps + 1)
    actions = np.empty(n_steps)

    for j in range(1, K + 1):
        rng = path_stream(config.sim.seed, j)
        draws = np.clip(rng.random(n_steps), 2.0**-53, 1.0 - 2.0**-53)
        eta = standardized_draw(h, draws)
        noise = rng.standard_normal(n_steps)
        with np.errstate(over="ignore"):
            scale = np.exp(0.5 * phi[1] + 0.5 * phi[2] * (T - times[:-1]))

        x = float(config.x0)
        states[0] = x
        phi0 = phi[0]
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(n_steps):
                u = float(-phi0 * (x - w) + scale[i] * eta[i])
                x = x + sigma * u * (rho * dt + sqdt * noise[i])
                actions[i] = u
                states[i + 1] = x
        if not math.isfinite(x):
            raise TrainingDivergedError(j, "non-finite wealth")

        episode = WealthPath(times=times, states=states, actions=actions,
                             running_regularizer=np.zeros(n_steps + 1))
        g_theta, g_phi, n_skip = episode_gradients(episode, theta, phi, w, config)
        skipped += n_skip
        g_theta, c1 = _clip(g_theta, config.grad_clip)
        g_phi, c2 = _clip(g_phi, config.grad_clip)
        clip_events += int(c1) + int(c2)

        lr = j ** (-config.decay)
        theta = theta - config.alpha_theta * lr * g_theta
        phi = phi - config.alpha_phi * lr * g_phi
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))):
            raise TrainingDivergedError(j, "non-finite parameters")

        tw_log[j - 1] = x
        if j % config.avg_window == 0:
            w = lagrange_update(w, tw_log[j - config.avg_window:j], config.alpha_w, z)
            if not math.isfinite(w):
                raise TrainingDivergedError(j, "non-finite multiplier")
        theta_log[j - 1] = theta
        phi_log[j - 1] = phi
        w_log[j - 1] = w

    return TrainLog(terminal_wealth=tw_log, theta=theta_log, phi=phi_log, w=w_log,
                    skipped_actions=skipped, clip_events=clip_events)
