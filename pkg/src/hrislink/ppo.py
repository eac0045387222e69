"""From-scratch PPO: numpy MLPs with reverse-mode gradients, a diagonal
Gaussian policy, GAE, the clipped surrogate objective, and Adam.

No autodiff framework is used; every gradient here is hand-derived and is
checked against central finite differences in the test suite. Networks are
plain dense MLPs (ReLU hidden layers). The policy head outputs the action
mean; the log standard deviation is a state-independent learned vector,
clamped to [LOG_STD_MIN, LOG_STD_MAX].

Training treats each collected batch as one "episode": batch_len
environment steps followed by several epochs of minibatch updates. Channel
realizations are i.i.d. per step, so there are no true terminals; the last
transition bootstraps from the critic's value of its successor state.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, GeometryParams, SystemConfig, draw_channels
from .env import (HrisEnv, decode_actions_batch, encode_states,
                  spectral_efficiency_batch)

__all__ = [
    "NonFiniteGradient",
    "PpoHyper",
    "Mlp",
    "Adam",
    "GaussianPolicy",
    "Trajectory",
    "UpdateStats",
    "actor_forward",
    "td_error",
    "gae",
    "value_target",
    "actor_loss_and_grads",
    "critic_loss_and_grads",
    "ppo_update",
    "TrainState",
    "init_train_state",
    "train",
    "infer",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = np.log(2.0 * np.pi)

CHECKPOINT_VERSION = 1


class NonFiniteGradient(RuntimeError):
    """A gradient contained NaN/Inf; the update was aborted."""


@dataclass(frozen=True)
class PpoHyper:
    """PPO hyperparameters. Defaults follow the experiment setup."""
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_len: int = 2048       # samples collected per update
    minibatch_size: int = 256
    epochs_per_update: int = 10
    entropy_coef: float = 0.0
    reward_scale: float = 10.0  # rewards enter TD as r / reward_scale

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must be in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ValueError("learning rates must be > 0")
        if self.batch_len < 1 or self.minibatch_size < 1:
            raise ValueError("batch_len and minibatch_size must be >= 1")
        if self.epochs_per_update < 1:
            raise ValueError("epochs_per_update must be >= 1")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be > 0")


class Mlp:
    """Dense ReLU MLP with hand-rolled forward/backward passes.

    Parameters live in self.weights / self.biases (lists, one entry per
    layer). Hidden layers use uniform fan-in init; the output layer is
    additionally scaled by `out_scale`.
    """

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 1.0,
                 dtype=np.float32):
        self.sizes = tuple(int(s) for s in sizes)
        self.dtype = np.dtype(dtype)
        self.weights = []
        self.biases = []
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            fan_in = self.sizes[i]
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, self.sizes[i + 1]))
            b = rng.uniform(-bound, bound, size=self.sizes[i + 1])
            if i == n_layers - 1:
                w *= out_scale
                b *= out_scale
            self.weights.append(w.astype(self.dtype))
            self.biases.append(b.astype(self.dtype))

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
        return x @ self.weights[-1] + self.biases[-1]

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping layer inputs for the backward pass."""
        x = np.asarray(x, dtype=self.dtype)
        cache = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            x = np.maximum(x @ w + b, 0.0)
            cache.append(x)
        out = x @ self.weights[-1] + self.biases[-1]
        return out, cache

    def backward(self, cache, dout: np.ndarray):
        """Gradients of a scalar loss wrt all parameters, given dL/dout.

        Returns a flat list matching params(): [dW0, db0, dW1, db1, ...].
        """
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = np.asarray(dout, dtype=self.dtype)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = cache[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (cache[i] > 0)
        out = []
        for gw, gb in zip(grads_w, grads_b):
            out.extend([gw, gb])
        return out


class Adam:
    """Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class GaussianPolicy:
    """Diagonal Gaussian policy: MLP mean, learned state-independent log std."""

    def __init__(self, state_dim: int, act_dim: int, rng: np.random.Generator,
                 hidden=(256, 256), dtype=np.float32, out_scale: float = 0.01):
        self.mlp = Mlp((state_dim,) + tuple(hidden) + (act_dim,), rng,
                       out_scale=out_scale, dtype=dtype)
        self.log_std = np.zeros(act_dim, dtype=dtype)

    def params(self):
        return self.mlp.params() + [self.log_std]

    def effective_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def mean(self, states: np.ndarray) -> np.ndarray:
        return self.mlp.forward(states)

    def sample(self, states: np.ndarray, rng: np.random.Generator):
        """Sample actions for a batch of states; returns (actions, log_probs)."""
        mu = self.mlp.forward(states)
        log_std = self.effective_log_std()
        noise = rng.standard_normal(mu.shape)
        actions = mu + np.exp(log_std) * noise
        logp = (-0.5 * np.sum(noise ** 2, axis=1) - np.sum(log_std)
                - 0.5 * mu.shape[1] * LOG_2PI)
        return actions, logp

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mu = self.mlp.forward(states)
        log_std = self.effective_log_std()
        z = (np.asarray(actions, dtype=mu.dtype) - mu) / np.exp(log_std)
        return (-0.5 * np.sum(z ** 2, axis=1) - np.sum(log_std)
                - 0.5 * mu.shape[1] * LOG_2PI)

    def entropy(self) -> float:
        log_std = self.effective_log_std()
        return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))


def actor_forward(policy: GaussianPolicy, state: np.ndarray):
    """(mean, effective log std) for a single state vector."""
    mean = policy.mlp.forward(np.atleast_2d(state))[0]
    return mean, policy.effective_log_std().copy()


def td_error(r, v_next, v, gamma: float):
    """delta = r + gamma * v_next - v (elementwise; r already reward-scaled)."""
    return np.asarray(r, dtype=float) + gamma * np.asarray(v_next, dtype=float) \
        - np.asarray(v, dtype=float)


def gae(deltas, gamma: float, lam: float) -> np.ndarray:
    """Advantages by the backward recursion A_t = delta_t + gamma*lam*A_{t+1}."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        raise ValueError("empty delta sequence")
    adv = np.empty_like(deltas)
    acc = 0.0
    for t in range(deltas.size - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv


def value_target(adv, v_old):
    """Critic regression target: advantage plus the pre-update value."""
    return np.asarray(adv, dtype=float) + np.asarray(v_old, dtype=float)


@dataclass
class Trajectory:
    """One collected batch of transitions plus derived learning targets."""
    states: np.ndarray        # (T, D_s)
    raw_actions: np.ndarray   # (T, D_a)
    log_probs: np.ndarray     # (T,)
    rewards: np.ndarray       # (T,) raw SE in bps/Hz
    values: np.ndarray        # (T,)
    next_values: np.ndarray   # (T,) bootstrapped at the buffer end
    advantages: np.ndarray = None
    value_targets: np.ndarray = None

    def __len__(self):
        return self.states.shape[0]


def compute_advantages(traj: Trajectory, hp: PpoHyper) -> None:
    """Fill advantages and value targets (in place) from the TD pipeline."""
    scaled = traj.rewards / hp.reward_scale
    deltas = td_error(scaled, traj.next_values, traj.values, hp.gamma)
    traj.advantages = gae(deltas, hp.gamma, hp.lam)
    traj.value_targets = value_target(traj.advantages, traj.values)


def actor_loss_and_grads(policy: GaussianPolicy, states, actions, logp_old,
                         adv, clip_eps: float, entropy_coef: float = 0.0):
    """Clipped-surrogate loss (negated objective) and its exact gradients.

    Returns (stats, grads) where grads matches policy.params() and stats
    holds surrogate, entropy, mean_ratio, clip_fraction and approx_kl.
    """
    dtype = policy.mlp.dtype
    states = np.asarray(states, dtype=dtype)
    actions = np.asarray(actions, dtype=dtype)
    logp_old = np.asarray(logp_old, dtype=dtype)
    adv = np.asarray(adv, dtype=dtype)
    n = states.shape[0]

    mu, cache = policy.mlp.forward_cached(states)
    log_std = policy.effective_log_std()
    sigma = np.exp(log_std)
    z = (actions - mu) / sigma
    logp = (-0.5 * np.sum(z ** 2, axis=1) - np.sum(log_std)
            - 0.5 * mu.shape[1] * LOG_2PI)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surrogate_terms = np.minimum(ratio * adv, clipped * adv)
    entropy = policy.entropy()
    objective = float(np.mean(surrogate_terms)) + entropy_coef * entropy

    # The min() passes gradient through the unclipped branch only where it
    # is the active one; elsewhere the clipped branch is flat.
    active = np.where(adv >= 0.0, ratio <= 1.0 + clip_eps,
                      ratio >= 1.0 - clip_eps)
    dj_dlogp = active * ratio * adv / n

    # d logp / d mu = z / sigma; backprop the negated objective.
    dmu = -(dj_dlogp[:, None] * z / sigma)
    grads = policy.mlp.backward(cache, dmu)

    # d logp / d log_std_j = z_j^2 - 1, through the clamp's pass mask.
    dj_dlogstd = np.sum(dj_dlogp[:, None] * (z ** 2 - 1.0), axis=0)
    if entropy_coef:
        dj_dlogstd = dj_dlogstd + entropy_coef
    pass_mask = (policy.log_std > LOG_STD_MIN) & (policy.log_std < LOG_STD_MAX)
    grads.append((-dj_dlogstd * pass_mask).astype(dtype))

    stats = {
        "loss": -objective,
        "surrogate": float(np.mean(surrogate_terms)),
        "entropy": entropy,
        "mean_ratio": float(np.mean(ratio)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "approx_kl": float(np.mean(logp_old - logp)),
    }
    return stats, grads


def critic_loss_and_grads(critic: Mlp, states, targets):
    """Mean-squared value error and its gradients wrt critic params."""
    states = np.asarray(states, dtype=critic.dtype)
    targets = np.asarray(targets, dtype=critic.dtype).reshape(-1, 1)
    v, cache = critic.forward_cached(states)
    err = v - targets
    loss = float(np.mean(err ** 2))
    grads = critic.backward(cache, 2.0 * err / err.shape[0])
    return loss, grads


@dataclass
class UpdateStats:
    actor_loss: float
    critic_loss: float
    surrogate: float
    mean_ratio: float
    clip_fraction: float
    kl_estimate: float
    entropy: float


def _check_finite(grads, what: str, epoch: int, minibatch: int):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(
                f"non-finite {what} gradient at epoch {epoch}, "
                f"minibatch {minibatch}")


def ppo_update(policy: GaussianPolicy, critic: Mlp, actor_opt: Adam,
               critic_opt: Adam, traj: Trajectory, hp: PpoHyper,
               rng: np.random.Generator) -> UpdateStats:
    """Several epochs of shuffled minibatch updates on one trajectory.

    Advantages are normalized to zero mean / unit variance per batch before
    the actor update (value targets use the unnormalized advantages).
    """
    if traj.advantages is None or traj.value_targets is None:
        compute_advantages(traj, hp)
    n = len(traj)
    adv = traj.advantages
    adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)

    agg = {k: 0.0 for k in ("actor_loss", "critic_loss", "surrogate",
                            "mean_ratio", "clip_fraction", "approx_kl",
                            "entropy")}
    steps = 0
    for epoch in range(hp.epochs_per_update):
        perm = rng.permutation(n)
        for mb, start in enumerate(range(0, n, hp.minibatch_size)):
            idx = perm[start:start + hp.minibatch_size]
            closs, cgrads = critic_loss_and_grads(
                critic, traj.states[idx], traj.value_targets[idx])
            _check_finite(cgrads, "critic", epoch, mb)
            critic_opt.step(critic.params(), cgrads)

            stats, agrads = actor_loss_and_grads(
                policy, traj.states[idx], traj.raw_actions[idx],
                traj.log_probs[idx], adv_n[idx], hp.clip_eps, hp.entropy_coef)
            _check_finite(agrads, "actor", epoch, mb)
            actor_opt.step(policy.params(), agrads)

            agg["critic_loss"] += closs
            agg["actor_loss"] += stats["loss"]
            agg["surrogate"] += stats["surrogate"]
            agg["mean_ratio"] += stats["mean_ratio"]
            agg["clip_fraction"] += stats["clip_fraction"]
            agg["approx_kl"] += stats["approx_kl"]
            agg["entropy"] += stats["entropy"]
            steps += 1

    return UpdateStats(
        actor_loss=agg["actor_loss"] / steps,
        critic_loss=agg["critic_loss"] / steps,
        surrogate=agg["surrogate"] / steps,
        mean_ratio=agg["mean_ratio"] / steps,
        clip_fraction=agg["clip_fraction"] / steps,
        kl_estimate=agg["approx_kl"] / steps,
        entropy=agg["entropy"] / steps,
    )


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------

@dataclass
class TrainState:
    """Everything a training run mutates; checkpointable."""
    policy: GaussianPolicy
    critic: Mlp
    actor_opt: Adam
    critic_opt: Adam
    sample_rng: np.random.Generator
    shuffle_rng: np.random.Generator
    episode: int = 0
    curve: list = field(default_factory=list)


def init_train_state(env: HrisEnv, hp: PpoHyper, seed: int,
                     hidden=(256, 256), dtype=np.float32) -> TrainState:
    init_rng = np.random.default_rng((int(seed), 1))
    policy = GaussianPolicy(env.state_dim, env.action_dim, init_rng,
                            hidden=hidden, dtype=dtype)
    critic = Mlp((env.state_dim,) + tuple(hidden) + (1,), init_rng,
                 dtype=dtype)
    return TrainState(
        policy=policy,
        critic=critic,
        actor_opt=Adam(policy.params(), hp.lr_actor),
        critic_opt=Adam(critic.params(), hp.lr_critic),
        sample_rng=np.random.default_rng((int(seed), 0)),
        shuffle_rng=np.random.default_rng((int(seed), 3)),
    )


def _rollout(env: HrisEnv, state: TrainState, hp: PpoHyper, seed: int,
             episode: int) -> Trajectory:
    """Collect batch_len transitions, fully vectorized.

    Channels are drawn per episode from the stateless key (seed, 2, episode):
    batch_len + 1 realizations, the last providing the bootstrap state.
    """
    t = hp.batch_len
    batch = draw_channels(env.cfg, env.geo, (int(seed), 2, int(episode)), t + 1)
    states = encode_states(batch).astype(state.policy.mlp.dtype)
    actions, logp = state.policy.sample(states[:t], state.sample_rng)
    f, alpha, mask = decode_actions_batch(
        actions.astype(float), env.cfg, env.mode, env.fixed_active_set)
    step_ch = ChannelSet(batch.h_direct[:t], batch.h_tx_ris[:t],
                         batch.h_ris_rx[:t], batch.betas)
    rewards = spectral_efficiency_batch(f, alpha, mask, step_ch, env.cfg)
    values = state.critic.forward(states).astype(float).ravel()
    return Trajectory(
        states=states[:t],
        raw_actions=actions.astype(state.policy.mlp.dtype),
        log_probs=logp.astype(float),
        rewards=rewards,
        values=values[:t],
        next_values=values[1:],
    )


def train(env: HrisEnv, hp: PpoHyper, episodes: int, seed: int = 0,
          state: TrainState = None, hidden=(256, 256), dtype=np.float32,
          log_fn=None) -> TrainState:
    """Run `episodes` collect/update cycles; deterministic given (env, seed).

    Resumable: passing the TrainState of a previous run continues it (the
    per-episode channel keys depend only on (seed, episode index)).
    Appends one row per episode to state.curve with the logged metrics.
    """
    if state is None:
        state = init_train_state(env, hp, seed, hidden=hidden, dtype=dtype)
    for _ in range(episodes):
        traj = _rollout(env, state, hp, seed, state.episode)
        compute_advantages(traj, hp)
        stats = ppo_update(state.policy, state.critic, state.actor_opt,
                           state.critic_opt, traj, hp, state.shuffle_rng)
        state.episode += 1
        row = {
            "episode": state.episode,
            "mean_se_bpshz": float(np.mean(traj.rewards)),
            "mean_scaled_reward": float(np.mean(traj.rewards) / hp.reward_scale),
            "clip_fraction": stats.clip_fraction,
            "kl_estimate": stats.kl_estimate,
        }
        state.curve.append(row)
        if log_fn is not None:
            log_fn(row, stats)
    return state


def infer(policy: GaussianPolicy, state_vec: np.ndarray) -> np.ndarray:
    """Deterministic action: the policy mean (no sampling)."""
    return np.asarray(policy.mean(np.atleast_2d(state_vec))[0], dtype=float)


# --------------------------------------------------------------------------
# Checkpointing
# --------------------------------------------------------------------------

def _cfg_to_dict(cfg: SystemConfig) -> dict:
    return {k: getattr(cfg, k) for k in (
        "n_tx", "n_rx", "n_streams", "n_ris", "n_active", "max_bs_power",
        "amp_factor", "noise_power", "residual_si")}


def _geo_to_dict(geo: GeometryParams) -> dict:
    return {
        "bs_pos": list(geo.bs_pos), "ris_pos": list(geo.ris_pos),
        "user_pos": list(geo.user_pos), "beta0_db": geo.beta0_db,
        "d0": geo.d0, "exponents": list(geo.exponents),
        "rician_k": [("inf" if np.isinf(k) else k) for k in geo.rician_k],
    }


def _geo_from_dict(d: dict) -> GeometryParams:
    ks = tuple(float("inf") if k == "inf" else float(k) for k in d["rician_k"])
    return GeometryParams(
        bs_pos=tuple(d["bs_pos"]), ris_pos=tuple(d["ris_pos"]),
        user_pos=tuple(d["user_pos"]), beta0_db=d["beta0_db"], d0=d["d0"],
        exponents=tuple(d["exponents"]), rician_k=ks)


def save_checkpoint(path, state: TrainState, env: HrisEnv, hp: PpoHyper,
                    seed: int) -> None:
    """Self-describing npz blob: params, Adam moments, config, RNG states."""
    arrays = {}
    for i, p in enumerate(state.policy.params()):
        arrays[f"actor_p{i}"] = p
        arrays[f"actor_m{i}"] = state.actor_opt.m[i]
        arrays[f"actor_v{i}"] = state.actor_opt.v[i]
    for i, p in enumerate(state.critic.params()):
        arrays[f"critic_p{i}"] = p
        arrays[f"critic_m{i}"] = state.critic_opt.m[i]
        arrays[f"critic_v{i}"] = state.critic_opt.v[i]
    meta = {
        "version": CHECKPOINT_VERSION,
        "seed": int(seed),
        "episode": int(state.episode),
        "adam_t_actor": int(state.actor_opt.t),
        "adam_t_critic": int(state.critic_opt.t),
        "dtype": state.policy.mlp.dtype.name,
        "hidden": list(state.policy.mlp.sizes[1:-1]),
        "hp": {k: getattr(hp, k) for k in (
            "gamma", "lam", "clip_eps", "lr_actor", "lr_critic", "batch_len",
            "minibatch_size", "epochs_per_update", "entropy_coef",
            "reward_scale")},
        "cfg": _cfg_to_dict(env.cfg),
        "geo": _geo_to_dict(env.geo),
        "mode": env.mode,
        "fixed_active_set": (None if env.fixed_active_set is None
                             else [int(i) for i in env.fixed_active_set]),
        "env_seed": int(env.seed),
        "sample_rng": state.sample_rng.bit_generator.state,
        "shuffle_rng": state.shuffle_rng.bit_generator.state,
        "curve": state.curve,
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Rebuild (env, hp, state, seed) from a checkpoint file."""
    blob = np.load(path, allow_pickle=False)
    meta = json.loads(bytes(blob["meta_json"]).decode("utf-8"))
    if meta["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    cfg = SystemConfig(**meta["cfg"])
    geo = _geo_from_dict(meta["geo"])
    env = HrisEnv(cfg, geo, mode=meta["mode"],
                  fixed_active_set=meta["fixed_active_set"],
                  seed=meta["env_seed"])
    hp = PpoHyper(**meta["hp"])
    state = init_train_state(env, hp, meta["seed"],
                             hidden=tuple(meta["hidden"]),
                             dtype=np.dtype(meta["dtype"]))
    for i, p in enumerate(state.policy.params()):
        p[...] = blob[f"actor_p{i}"]
        state.actor_opt.m[i][...] = blob[f"actor_m{i}"]
        state.actor_opt.v[i][...] = blob[f"actor_v{i}"]
    for i, p in enumerate(state.critic.params()):
        p[...] = blob[f"critic_p{i}"]
        state.critic_opt.m[i][...] = blob[f"critic_m{i}"]
        state.critic_opt.v[i][...] = blob[f"critic_v{i}"]
    state.actor_opt.t = meta["adam_t_actor"]
    state.critic_opt.t = meta["adam_t_critic"]
    state.episode = meta["episode"]
    state.curve = meta["curve"]
    state.sample_rng.bit_generator.state = meta["sample_rng"]
    state.shuffle_rng.bit_generator.state = meta["shuffle_rng"]
    return env, hp, state, meta["seed"]
