"""Procedural two-dimensional grid worlds with noisy directional moves.

States are cells of an n x n grid, indexed row-major; the four actions try
to move one cell up, down, left or right. Move noise depends on how many
grid sides the cell touches:

* corner cells (two boundary sides): an off-grid action stays put with 0.8
  and slips to each of the two neighbours with 0.1; an on-grid action
  reaches the target with 0.8 and slips to the other neighbour with 0.2.
* edge cells (one boundary side): an off-grid action stays put with 0.7 and
  slips to each of the three neighbours with 0.1; an on-grid action reaches
  the target with 0.7, stays with 0.1 and slips to the other two neighbours
  with 0.1 each.
* interior cells: the target is reached with 0.7, each other neighbour with
  0.1.

The goal cell teleports to the start under every action, at zero cost.
Every action that points off-grid charges a fixed high running cost in
place of the cell's base cost; hazard cells charge a fixed high constraint
cost. All other non-goal cells charge an integer running cost and an integer
constraint cost drawn once per cell (uniformly from the configured range)
from the cost seed, so a spec rebuilds to an identical model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Deterministic
from .model import TabularCmdp

__all__ = ["GridSpec", "ACTIONS", "build_gridworld", "canonical_spec",
           "canonical_specs", "anti_diagonal_hazards", "describe_grid",
           "CANONICAL_SIDES"]

# action id -> (row delta, col delta)
ACTIONS = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}
ACTION_NAMES = {0: "up", 1: "down", 2: "left", 3: "right"}
CANONICAL_SIDES = (5, 25, 40)


@dataclass(frozen=True)
class GridSpec:
    """Everything needed to rebuild one grid world deterministically."""

    side: int
    start: tuple[int, int] = (0, 0)
    goal: tuple[int, int] | None = None
    hazard_cells: frozenset = frozenset()
    cost_seed: int = 0
    out_of_grid_cost: float = 10.0
    hazard_constraint_cost: float = 10.0
    random_cost_range: tuple[int, int] = (2, 4)
    alpha: float = 0.5

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("grid side must be at least 2")
        goal = self.goal if self.goal is not None \
            else (self.side - 1, self.side - 1)
        object.__setattr__(self, "goal", tuple(goal))
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "hazard_cells",
                           frozenset(tuple(c) for c in self.hazard_cells))
        if self.start == self.goal:
            raise ValueError("start and goal must differ")
        if self.goal in self.hazard_cells:
            raise ValueError("goal cannot be a hazard cell")
        for cell in (self.start, self.goal, *self.hazard_cells):
            r, c = cell
            if not (0 <= r < self.side and 0 <= c < self.side):
                raise ValueError(f"cell {cell} outside the grid")

    def index(self, cell) -> int:
        return cell[0] * self.side + cell[1]


def anti_diagonal_hazards(side: int, density: float = 0.1,
                          seed: int | None = None) -> frozenset:
    """Hazard cells sampled from the anti-diagonal band |r + c - (n-1)| <= 1.

    The start and goal corners are excluded. The count is density * n^2
    rounded down (at least one); the draw is seeded per side so canonical
    instances are stable.
    """
    if seed is None:
        seed = 1000 + side
    band = [(r, c) for r in range(side) for c in range(side)
            if abs(r + c - (side - 1)) <= 1
            and (r, c) not in ((0, 0), (side - 1, side - 1))]
    count = min(len(band), max(1, int(density * side * side)))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(band), size=count, replace=False)
    return frozenset(band[i] for i in sorted(picked))


def canonical_spec(side: int) -> GridSpec:
    """The benchmark instance for one side: corner-to-corner with a hazard
    band on the anti-diagonal and threshold 0.5."""
    return GridSpec(side=side, start=(0, 0), goal=(side - 1, side - 1),
                    hazard_cells=anti_diagonal_hazards(side),
                    cost_seed=2000 + side, alpha=0.5)


def canonical_specs() -> dict[int, GridSpec]:
    return {side: canonical_spec(side) for side in CANONICAL_SIDES}


def _neighbors(spec: GridSpec, r: int, c: int):
    """Per action: target cell or None when the move points off-grid."""
    out = {}
    for a, (dr, dc) in ACTIONS.items():
        rr, cc = r + dr, c + dc
        out[a] = (rr, cc) if 0 <= rr < spec.side and 0 <= cc < spec.side \
            else None
    return out


def draw_cell_costs(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell base running and constraint costs (goal forced to zero).

    Cells are visited in row-major order, drawing the running cost then the
    constraint cost, so the assignment is a pure function of the spec.
    """
    rng = np.random.default_rng(spec.cost_seed)
    lo, hi = spec.random_cost_range
    n = spec.side * spec.side
    cost = np.zeros(n)
    ccost = np.zeros(n)
    goal = spec.index(spec.goal)
    for s in range(n):
        c = float(rng.integers(lo, hi + 1))
        y = float(rng.integers(lo, hi + 1))
        if s == goal:
            continue
        cost[s] = c
        ccost[s] = y
    for cell in spec.hazard_cells:
        ccost[spec.index(cell)] = spec.hazard_constraint_cost
    return cost, ccost


def build_gridworld(spec: GridSpec) -> TabularCmdp:
    n = spec.side
    S = n * n
    goal = spec.index(spec.goal)
    start = spec.index(spec.start)
    transition = np.zeros((S, 4, S))
    cell_cost, cell_ccost = draw_cell_costs(spec)
    qcosts = {}
    hcosts = {}

    for r in range(n):
        for c in range(n):
            s = r * n + c
            if s == goal:
                for a in ACTIONS:
                    transition[s, a, start] = 1.0
                continue
            nbrs = _neighbors(spec, r, c)
            on_grid = [a for a, cell in nbrs.items() if cell is not None]
            off_grid = [a for a, cell in nbrs.items() if cell is None]
            n_on = len(on_grid)
            for a in ACTIONS:
                row = transition[s, a]
                if nbrs[a] is None:
                    # off-grid action: stay, slip uniformly to neighbours
                    stay = 0.8 if n_on == 2 else 0.7
                    row[s] += stay
                    for b in on_grid:
                        row[spec.index(nbrs[b])] += 0.1
                else:
                    target = spec.index(nbrs[a])
                    if n_on == 2:        # corner cell
                        row[target] += 0.8
                        other = [b for b in on_grid if b != a][0]
                        row[spec.index(nbrs[other])] += 0.2
                    elif n_on == 3:      # edge cell
                        row[target] += 0.7
                        row[s] += 0.1
                        for b in on_grid:
                            if b != a:
                                row[spec.index(nbrs[b])] += 0.1
                    else:                # interior cell
                        row[target] += 0.7
                        for b in on_grid:
                            if b != a:
                                row[spec.index(nbrs[b])] += 0.1
                q = spec.out_of_grid_cost if nbrs[a] is None else cell_cost[s]
                qcosts[(s, a)] = Deterministic(q)
                hcosts[(s, a)] = Deterministic(cell_ccost[s])

    u_c = max(spec.out_of_grid_cost, spec.hazard_constraint_cost,
              float(spec.random_cost_range[1]))
    return TabularCmdp(S, 4, transition, cost=qcosts, constraints=[hcosts],
                       alphas=[spec.alpha], u_c=u_c, start_state=start)


def describe_grid(spec: GridSpec) -> str:
    """Text map plus the per-cell cost assignment."""
    cost, ccost = draw_cell_costs(spec)
    lines = [f"{spec.side}x{spec.side} grid world, threshold {spec.alpha}",
             "S start, G goal, ! hazard; cell costs below"]
    for r in range(spec.side):
        row = []
        for c in range(spec.side):
            if (r, c) == spec.start:
                tag = "S"
            elif (r, c) == spec.goal:
                tag = "G"
            elif (r, c) in spec.hazard_cells:
                tag = "!"
            else:
                tag = "."
            row.append(tag)
        lines.append(" ".join(row))
    lines.append("")
    lines.append("running cost / constraint cost per cell:")
    for r in range(spec.side):
        row = []
        for c in range(spec.side):
            s = r * spec.side + c
            row.append(f"{cost[s]:3.0f}/{ccost[s]:2.0f}")
        lines.append(" ".join(row))
    return "\n".join(lines)
