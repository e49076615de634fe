"""Softmax policies over linear action features.

pi(a|s) = exp(theta . x_sa / T) / sum_b exp(theta . x_sb / T)

The default is the tabular mode: one indicator feature per feasible (s, a)
pair, so the parameter vector has one entry per pair and the score
grad log pi(a|s) is supported on the action block of s. Explicit feature
matrices are accepted for generalization experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SoftmaxPolicy", "policy_smoothness_report", "SmoothnessReport",
           "save_policy_checkpoint", "load_policy_checkpoint"]


@dataclass(frozen=True)
class SoftmaxPolicy:
    """Immutable policy snapshot; learners swap in new theta via `with_theta`."""

    feasible_actions: tuple[tuple[int, ...], ...]
    theta: np.ndarray
    temperature: float = 1.0
    # tabular mode: offsets[s] is the start of state s's block in theta
    offsets: np.ndarray | None = None
    # explicit mode: features[s] is a (|A(s)|, d) matrix of action features
    features: tuple[np.ndarray, ...] | None = None

    def __init__(self, feasible_actions, theta=None, temperature=1.0,
                 features=None):
        feasible_actions = tuple(tuple(int(a) for a in acts)
                                 for acts in feasible_actions)
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        offsets = None
        if features is None:
            counts = [len(acts) for acts in feasible_actions]
            offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            dim = int(offsets[-1])
        else:
            features = tuple(np.asarray(f, dtype=float) for f in features)
            dims = {f.shape[1] for f in features}
            if len(dims) != 1:
                raise ValueError("action feature dims differ across states")
            for f, acts in zip(features, feasible_actions):
                if f.shape[0] != len(acts):
                    raise ValueError("one feature row per feasible action")
            dim = dims.pop()
        if theta is None:
            theta = np.zeros(dim)
        theta = np.array(theta, dtype=float, order="C", copy=True)
        if theta.shape != (dim,):
            raise ValueError(f"theta shape {theta.shape} != ({dim},)")
        object.__setattr__(self, "feasible_actions", feasible_actions)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "temperature", float(temperature))
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "features", features)
        theta.setflags(write=False)

    @classmethod
    def tabular(cls, feasible_actions, theta=None, temperature=1.0):
        return cls(feasible_actions, theta=theta, temperature=temperature)

    @classmethod
    def for_model(cls, model, theta=None, temperature=1.0):
        return cls(model.feasible_actions, theta=theta,
                   temperature=temperature)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    @property
    def n_states(self) -> int:
        return len(self.feasible_actions)

    @property
    def is_tabular(self) -> bool:
        return self.features is None

    def with_theta(self, theta) -> "SoftmaxPolicy":
        return SoftmaxPolicy(self.feasible_actions, theta=theta,
                             temperature=self.temperature,
                             features=self.features)

    def logits(self, s: int) -> np.ndarray:
        if self.is_tabular:
            lo = self.offsets[s]
            z = self.theta[lo:lo + len(self.feasible_actions[s])]
        else:
            z = self.features[s] @ self.theta
        return z / self.temperature

    def action_probs(self, s: int) -> np.ndarray:
        """Probabilities over A(s), computed with max-subtraction."""
        z = self.logits(s)
        e = np.exp(z - z.max())
        return e / e.sum()

    def sample_action(self, s: int, rng: np.random.Generator) -> int:
        """Index into A(s); map through feasible_actions[s] for the action id."""
        z = self.logits(s)
        e = np.exp(z - z.max())
        i = int(np.searchsorted(np.cumsum(e), rng.random() * e.sum(),
                                side="right"))
        return min(i, len(e) - 1)

    def action_feature(self, s: int, a_idx: int) -> np.ndarray:
        if self.is_tabular:
            x = np.zeros(self.dim)
            x[self.offsets[s] + a_idx] = 1.0
            return x
        return self.features[s][a_idx]

    def log_policy_gradient(self, s: int, a_idx: int) -> np.ndarray:
        """Score grad log pi(a|s) = (x_sa - sum_b pi(b|s) x_sb) / T."""
        probs = self.action_probs(s)
        if self.is_tabular:
            g = np.zeros(self.dim)
            lo = self.offsets[s]
            g[lo:lo + probs.size] = -probs
            g[lo + a_idx] += 1.0
            return g / self.temperature
        x = self.features[s]
        return (x[a_idx] - probs @ x) / self.temperature

    def score_bound(self) -> float:
        """D = 2 max ||x_sa|| / T, a uniform bound on every score norm."""
        if self.is_tabular:
            mx = 1.0
        else:
            mx = max(float(np.linalg.norm(f, axis=1).max())
                     for f in self.features)
        return 2.0 * mx / self.temperature


@dataclass(frozen=True)
class SmoothnessReport:
    """Empirical Lipschitz ratios over sampled parameter pairs."""

    prob_ratio: float     # max |pi_1(a|s) - pi_2(a|s)| / ||theta_1 - theta_2||
    score_ratio: float    # max ||score_1 - score_2|| / ||theta_1 - theta_2||
    n_pairs: int


def policy_smoothness_report(policy: SoftmaxPolicy, theta_pairs,
                             states=None) -> SmoothnessReport:
    """Probe policy smoothness on explicit parameter pairs.

    Ratios are reported, not enforced; identical pairs contribute zero.
    """
    if states is None:
        states = range(policy.n_states)
    states = list(states)
    worst_p, worst_g, n = 0.0, 0.0, 0
    for th1, th2 in theta_pairs:
        n += 1
        dn = float(np.linalg.norm(np.asarray(th1) - np.asarray(th2)))
        if dn == 0.0:
            continue
        p1, p2 = policy.with_theta(th1), policy.with_theta(th2)
        for s in states:
            pr1, pr2 = p1.action_probs(s), p2.action_probs(s)
            worst_p = max(worst_p, float(np.abs(pr1 - pr2).max()) / dn)
            for a_idx in range(len(policy.feasible_actions[s])):
                gd = np.linalg.norm(p1.log_policy_gradient(s, a_idx)
                                    - p2.log_policy_gradient(s, a_idx))
                worst_g = max(worst_g, float(gd) / dn)
    return SmoothnessReport(worst_p, worst_g, n)


def save_policy_checkpoint(policy: SoftmaxPolicy, path) -> None:
    """Checkpoint = dimension, theta entries, feature descriptor."""
    desc = ("tabular" if policy.is_tabular else "explicit")
    with open(path, "w") as fh:
        fh.write(f"softmax-policy-v1 dim {policy.dim} "
                 f"temperature {policy.temperature!r} features {desc}\n")
        for v in policy.theta:
            fh.write(repr(float(v)) + "\n")


def load_policy_checkpoint(path, feasible_actions,
                           features=None) -> SoftmaxPolicy:
    with open(path) as fh:
        head = fh.readline().split()
        if head[0] != "softmax-policy-v1":
            raise ValueError("not a policy checkpoint")
        dim = int(head[2])
        temperature = float(head[4])
        theta = np.array([float(fh.readline()) for _ in range(dim)])
    return SoftmaxPolicy(feasible_actions, theta=theta,
                         temperature=temperature, features=features)
