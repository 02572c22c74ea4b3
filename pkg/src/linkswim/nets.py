"""Dense actor-critic networks with hand-written gradients and Adam.

Everything is plain float64 numpy: a small tanh MLP, a Gaussian policy
head with state-independent log standard deviations, reverse-mode
gradients computed layer by layer, and a standard Adam optimizer. No
learning framework is involved, so the whole parameter update is a page
of explicit linear algebra that tests can check against finite
differences.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import RATE_CAP, JointRates

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = math.log(0.5)
LOG_2PI = math.log(2.0 * math.pi)

CHECKPOINT_FORMAT = "linkswim-policy-1"


class IncompatibleCheckpointError(ValueError):
    """Checkpoint file malformed or shaped differently than expected."""


@dataclass(frozen=True)
class NetworkShape:
    """Widths of the dense stack; both heads share the hidden layout."""

    input_width: int = 4
    hidden: tuple = (64, 64)
    actor_out: int = 2
    critic_out: int = 1

    def __post_init__(self):
        widths = (self.input_width, *self.hidden, self.actor_out, self.critic_out)
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")


def orthogonal(rows: int, cols: int, gain: float, rng: np.random.Generator):
    """Orthogonal weight matrix (rows, cols) scaled by gain."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """Fully connected tanh network; weights stored (out, in) per layer.

    forward returns the cache needed by backward, keeping the object
    itself stateless between calls.
    """

    def __init__(self, widths, rng: np.random.Generator,
                 hidden_gain: float = 1.0, out_gain: float = 1.0):
        self.widths = tuple(widths)
        self.W = []
        self.b = []
        last = len(widths) - 2
        for i, (nin, nout) in enumerate(zip(widths[:-1], widths[1:])):
            gain = out_gain if i == last else hidden_gain
            self.W.append(orthogonal(nout, nin, gain, rng))
            self.b.append(np.zeros(nout))

    def forward(self, X):
        """Batched forward pass.

        Returns (out, cache); X may be (n, in) or a single (in,) vector,
        out is always 2-D.
        """
        a = np.atleast_2d(np.asarray(X, dtype=float))
        acts = [a]
        for i in range(len(self.W) - 1):
            a = np.tanh(a @ self.W[i].T + self.b[i])
            acts.append(a)
        out = a @ self.W[-1].T + self.b[-1]
        return out, acts

    def backward(self, acts, dout):
        """Gradients of a scalar loss given d(loss)/d(out).

        Returns (dW, db) lists aligned with self.W / self.b.
        """
        dout = np.atleast_2d(dout)
        if dout.shape[1] != self.W[-1].shape[0]:
            raise ValueError(
                f"upstream gradient width {dout.shape[1]} does not match "
                f"output width {self.W[-1].shape[0]}")
        dW = [None] * len(self.W)
        db = [None] * len(self.W)
        g = dout
        for i in range(len(self.W) - 1, -1, -1):
            dW[i] = g.T @ acts[i]
            db[i] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.W[i]) * (1.0 - acts[i] * acts[i])
        return dW, db

    def params(self):
        """Live references, ordered W1, b1, W2, b2, ..."""
        out = []
        for W, b in zip(self.W, self.b):
            out.append(W)
            out.append(b)
        return out

    def set_params(self, values):
        for p, v in zip(self.params(), values):
            p[:] = v


class GaussianPolicy:
    """Actor: observation -> Gaussian action distribution over joint rates."""

    def __init__(self, rng: np.random.Generator, hidden=(64, 64),
                 rate_cap: float = RATE_CAP):
        self.net = MLP([4, *hidden, 2], rng, hidden_gain=1.0, out_gain=0.01)
        self.log_std = np.full(2, LOG_STD_INIT)
        self.rate_cap = rate_cap

    def mean(self, obs):
        out, _ = self.net.forward(obs)
        return out

    def std(self):
        return np.exp(self.log_std)

    def act(self, obs) -> JointRates:
        """Deterministic (mean) action, clamped to the rate cap."""
        m = self.mean(obs)[0]
        c = self.rate_cap
        return JointRates(float(np.clip(m[0], -c, c)), float(np.clip(m[1], -c, c)))

    def clamp_log_std(self):
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def entropy(self) -> float:
        """Closed-form diagonal Gaussian entropy."""
        return float(np.sum(self.log_std + 0.5 * (1.0 + LOG_2PI)))

    def params(self):
        return self.net.params() + [self.log_std]


class Critic:
    """Observation -> expected return estimate."""

    def __init__(self, rng: np.random.Generator, hidden=(64, 64)):
        self.net = MLP([4, *hidden, 1], rng, hidden_gain=1.0, out_gain=1.0)

    def value(self, obs):
        out, _ = self.net.forward(obs)
        return out[:, 0]

    def params(self):
        return self.net.params()


def actor_forward(policy: GaussianPolicy, obs):
    """(mean, std) of the action distribution for one observation."""
    mean = policy.mean(obs)[0]
    return mean, policy.std()


def critic_forward(critic: Critic, obs) -> float:
    return float(critic.value(np.atleast_2d(obs))[0])


def gaussian_log_prob(raw, mean, std):
    """Exact log-density of a diagonal Gaussian; inputs broadcast."""
    z = (np.asarray(raw) - mean) / std
    return float(-0.5 * np.sum(z * z) - np.sum(np.log(std)) - LOG_2PI)


def sample_action(mean, std, rng: np.random.Generator,
                  rate_cap: float = RATE_CAP):
    """Draw an action; return it clamped with the raw sample's log-density.

    The log-probability always refers to the raw (unclamped) Gaussian
    sample: the clamp is part of the environment interface, not of the
    distribution the learner reasons about.
    """
    raw = mean + std * rng.standard_normal(2)
    logp = gaussian_log_prob(raw, mean, std)
    action = JointRates(float(np.clip(raw[0], -rate_cap, rate_cap)),
                        float(np.clip(raw[1], -rate_cap, rate_cap)))
    return action, logp


class Adam:
    """Standard Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, params, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != np.shape(g):
                raise ValueError(f"gradient shape {np.shape(g)} != parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_dict(self):
        return {"t": self.t,
                "m": [x.tolist() for x in self.m],
                "v": [x.tolist() for x in self.v]}

    def load_state(self, d):
        if len(d["m"]) != len(self.m):
            raise IncompatibleCheckpointError("optimizer state length mismatch")
        self.t = int(d["t"])
        for tgt, src in zip(self.m, d["m"]):
            arr = np.asarray(src, dtype=float)
            if arr.shape != tgt.shape:
                raise IncompatibleCheckpointError("optimizer moment shape mismatch")
            tgt[:] = arr
        for tgt, src in zip(self.v, d["v"]):
            tgt[:] = np.asarray(src, dtype=float)


def adam_update(params, grads, opt: Adam):
    """Functional face of Adam.step for a prebuilt optimizer."""
    if list(map(id, params)) != list(map(id, opt.params)):
        raise ValueError("optimizer owns a different parameter list")
    opt.step(grads)
    return params


# ------------------------------------------------------------ checkpoints

def _mlp_to_dict(net: MLP):
    return {"widths": list(net.widths),
            "W": [w.tolist() for w in net.W],
            "b": [b.tolist() for b in net.b]}


def _mlp_from_dict(d, net: MLP):
    if tuple(d["widths"]) != net.widths:
        raise IncompatibleCheckpointError(
            f"network widths {tuple(d['widths'])} != expected {net.widths}")
    for tgt, src in zip(net.W, d["W"]):
        arr = np.asarray(src, dtype=float)
        if arr.shape != tgt.shape:
            raise IncompatibleCheckpointError("weight shape mismatch")
        tgt[:] = arr
    for tgt, src in zip(net.b, d["b"]):
        tgt[:] = np.asarray(src, dtype=float)


def save_checkpoint(path, policy: GaussianPolicy, critic: Critic,
                    actor_opt: Adam = None, critic_opt: Adam = None,
                    seed_lineage=None, extras=None):
    """Write a self-describing JSON checkpoint.

    Floats serialize via repr, so a load followed by a save reproduces
    values bit-exactly.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "hidden": list(policy.net.widths[1:-1]),
        "rate_cap": policy.rate_cap,
        "log_std": policy.log_std.tolist(),
        "actor": _mlp_to_dict(policy.net),
        "critic": _mlp_to_dict(critic.net),
        "adam": {
            "actor": actor_opt.state_dict() if actor_opt else None,
            "critic": critic_opt.state_dict() if critic_opt else None,
        },
        "seed_lineage": seed_lineage,
        "extras": extras or {},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Load a checkpoint; returns (policy, critic, doc).

    Optimizer state stays in the returned document; attach it with
    Adam.load_state when resuming training.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise IncompatibleCheckpointError(f"not a checkpoint file: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise IncompatibleCheckpointError(
            f"unrecognized checkpoint format {doc.get('format')!r}"
            if isinstance(doc, dict) else "unrecognized checkpoint structure")
    hidden = tuple(doc["hidden"])
    rng = np.random.default_rng(0)  # placeholder weights, overwritten below
    policy = GaussianPolicy(rng, hidden=hidden,
                            rate_cap=float(doc.get("rate_cap", RATE_CAP)))
    critic = Critic(rng, hidden=hidden)
    _mlp_from_dict(doc["actor"], policy.net)
    _mlp_from_dict(doc["critic"], critic.net)
    log_std = np.asarray(doc["log_std"], dtype=float)
    if log_std.shape != (2,):
        raise IncompatibleCheckpointError("log_std must have two entries")
    policy.log_std[:] = log_std
    return policy, critic, doc
