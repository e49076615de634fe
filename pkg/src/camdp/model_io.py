"""Plain-text model files.

Line-oriented format, one record per line, `#` comments allowed:

    format cmdp-v1
    n_states 25
    n_actions 4
    u_c 10
    start 0
    alphas 0.5
    state S actions A1 A2 ...          # one line per state
    t S A S' P                         # transition triple, prob as decimal
    q S A S' det V | duint LO HI | cat V1 .. Vn / P1 .. Pn
    h K S A S' <same descriptors>      # K = constraint index

Cost lines may be omitted for zero-cost entries. Floats are written with
shortest round-trip repr, so parse -> write reproduces the file byte for
byte whenever probabilities are given as decimals.
"""

from __future__ import annotations

import numpy as np

from .distributions import Categorical, Deterministic, DiscreteUniformInt
from .model import TabularCmdp

__all__ = ["dump_model", "load_model", "save_model_file", "load_model_file",
           "ModelFormatError"]


class ModelFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def _dist_tokens(d) -> list[str]:
    if isinstance(d, Deterministic):
        return ["det", _fmt(d.value)]
    if isinstance(d, DiscreteUniformInt):
        return ["duint", str(d.lo), str(d.hi)]
    if isinstance(d, Categorical):
        return ["cat", *[_fmt(v) for v in d.values], "/",
                *[_fmt(p) for p in d.probs]]
    raise ModelFormatError(f"unknown distribution {d!r}")


def _parse_dist(tokens):
    kind = tokens[0]
    if kind == "det":
        return Deterministic(float(tokens[1]))
    if kind == "duint":
        return DiscreteUniformInt(int(tokens[1]), int(tokens[2]))
    if kind == "cat":
        sep = tokens.index("/")
        return Categorical([float(v) for v in tokens[1:sep]],
                           [float(p) for p in tokens[sep + 1:]])
    raise ModelFormatError(f"unknown distribution kind {kind!r}")


def dump_model(model: TabularCmdp) -> str:
    lines = ["format cmdp-v1",
             f"n_states {model.n_states}",
             f"n_actions {model.n_actions}",
             f"u_c {_fmt(model.u_c)}",
             f"start {model.start_state}",
             "alphas " + " ".join(_fmt(a) for a in model.alphas)]
    for s, acts in enumerate(model.feasible_actions):
        lines.append(f"state {s} actions " + " ".join(str(a) for a in acts))
    zero = Deterministic(0.0)
    for s in range(model.n_states):
        for a in model.feasible_actions[s]:
            for s1 in np.nonzero(model.transition[s, a] > 0.0)[0]:
                s1 = int(s1)
                lines.append(f"t {s} {a} {s1} {_fmt(model.transition[s, a, s1])}")
                d = model.cost[(s, a, s1)]
                if d != zero:
                    lines.append(f"q {s} {a} {s1} " + " ".join(_dist_tokens(d)))
                for k, tb in enumerate(model.constraints):
                    d = tb[(s, a, s1)]
                    if d != zero:
                        lines.append(f"h {k} {s} {a} {s1} "
                                     + " ".join(_dist_tokens(d)))
    return "\n".join(lines) + "\n"


def load_model(text: str) -> TabularCmdp:
    header = {}
    feasible = {}
    triples = []
    qcosts = {}
    hcosts = {}
    alphas = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            key = tok[0]
            if key == "format":
                if tok[1] != "cmdp-v1":
                    raise ModelFormatError(f"unsupported format {tok[1]!r}")
            elif key in ("n_states", "n_actions", "start"):
                header[key] = int(tok[1])
            elif key == "u_c":
                header[key] = float(tok[1])
            elif key == "alphas":
                alphas = [float(x) for x in tok[1:]]
            elif key == "state":
                if tok[2] != "actions":
                    raise ModelFormatError("malformed state line")
                feasible[int(tok[1])] = tuple(int(a) for a in tok[3:])
            elif key == "t":
                triples.append((int(tok[1]), int(tok[2]), int(tok[3]),
                                float(tok[4])))
            elif key == "q":
                qcosts[(int(tok[1]), int(tok[2]), int(tok[3]))] = \
                    _parse_dist(tok[4:])
            elif key == "h":
                hcosts.setdefault(int(tok[1]), {})[
                    (int(tok[2]), int(tok[3]), int(tok[4]))] = \
                    _parse_dist(tok[5:])
            else:
                raise ModelFormatError(f"unknown record {key!r}")
        except (IndexError, ValueError) as exc:
            raise ModelFormatError(f"line {lineno}: {exc}") from exc

    for need in ("n_states", "n_actions"):
        if need not in header:
            raise ModelFormatError(f"missing header line {need!r}")
    S, A = header["n_states"], header["n_actions"]
    transition = np.zeros((S, A, S))
    for s, a, s1, p in triples:
        transition[s, a, s1] = p
    feas = tuple(feasible.get(s, ()) for s in range(S))
    n_cons = len(alphas)
    constraints = [hcosts.get(k, {}) for k in range(n_cons)]
    return TabularCmdp(S, A, transition, cost=qcosts, constraints=constraints,
                       alphas=alphas, u_c=header.get("u_c", 1.0),
                       feasible_actions=feas,
                       start_state=header.get("start", 0))


def save_model_file(model: TabularCmdp, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_model(model))


def load_model_file(path) -> TabularCmdp:
    with open(path) as fh:
        return load_model(fh.read())
