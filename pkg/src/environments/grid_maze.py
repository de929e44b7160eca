"""Grid maze with apples and a portal: a feature-vector analogue of a 3D maze task.

Layouts come from recursive division with one door per wall, followed by a
repair pass that carves the shortest wall path to any free cell the flood fill
from the first free cell cannot reach. Every generated maze is connected.
"""

import logging
from collections import deque
from typing import List, Optional, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError
from ..interfaces.environment import EnvironmentInterface, EnvStep, TabularMDP

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

# up, down, left, right as (d_row, d_col)
MOVES: List[Cell] = [(-1, 0), (1, 0), (0, -1), (0, 1)]

APPLE_REWARD = 1.0
PORTAL_REWARD = 10.0
N_CHANNELS = 4


def _divide(walls: np.ndarray, r0: int, c0: int, r1: int, c1: int, rng: np.random.Generator) -> None:
    height = r1 - r0 + 1
    width = c1 - c0 + 1
    if height < 3 and width < 3:
        return

    if height > width:
        horizontal = True
    elif width > height:
        horizontal = False
    else:
        horizontal = bool(rng.integers(2))
    if horizontal and height < 3:
        horizontal = False
    if not horizontal and width < 3:
        horizontal = True

    if horizontal:
        row = int(rng.integers(r0 + 1, r1))
        walls[row, c0:c1 + 1] = True
        walls[row, int(rng.integers(c0, c1 + 1))] = False
        _divide(walls, r0, c0, row - 1, c1, rng)
        _divide(walls, row + 1, c0, r1, c1, rng)
    else:
        col = int(rng.integers(c0 + 1, c1))
        walls[r0:r1 + 1, col] = True
        walls[int(rng.integers(r0, r1 + 1)), col] = False
        _divide(walls, r0, c0, r1, col - 1, rng)
        _divide(walls, r0, col + 1, r1, c1, rng)


def _neighbours(cell: Cell, shape: Tuple[int, int]):
    rows, cols = shape
    for dr, dc in MOVES:
        r, c = cell[0] + dr, cell[1] + dc
        if 0 <= r < rows and 0 <= c < cols:
            yield (r, c)


def flood_fill(walls: np.ndarray, start: Cell) -> np.ndarray:
    """Boolean mask of free cells reachable from start"""
    reached = np.zeros_like(walls, dtype=bool)
    if walls[start]:
        return reached
    reached[start] = True
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for nxt in _neighbours(cell, walls.shape):
            if not walls[nxt] and not reached[nxt]:
                reached[nxt] = True
                queue.append(nxt)
    return reached


def _repair(walls: np.ndarray) -> None:
    free = np.argwhere(~walls)
    if free.size == 0:
        walls[0, 0] = False
        return
    start = (int(free[0][0]), int(free[0][1]))

    while True:
        reached = flood_fill(walls, start)
        if not np.any(~walls & ~reached):
            return

        # BFS through walls from the reached region to the nearest stranded free cell
        parent = {}
        queue = deque()
        for r, c in np.argwhere(reached):
            cell = (int(r), int(c))
            parent[cell] = None
            queue.append(cell)
        target = None
        while queue and target is None:
            cell = queue.popleft()
            for nxt in _neighbours(cell, walls.shape):
                if nxt in parent:
                    continue
                parent[nxt] = cell
                if not walls[nxt] and not reached[nxt]:
                    target = nxt
                    break
                queue.append(nxt)

        cell = target
        while cell is not None:
            walls[cell] = False
            cell = parent[cell]


def generate_layout(width: int, height: int, rng: np.random.Generator) -> Tuple[np.ndarray, Cell]:
    """Connected wall mask (height x width) and a portal cell"""
    walls = np.zeros((height, width), dtype=bool)
    _divide(walls, 0, 0, height - 1, width - 1, rng)
    _repair(walls)
    free = np.argwhere(~walls)
    r, c = free[int(rng.integers(len(free)))]
    return walls, (int(r), int(c))


class GridMaze(EnvironmentInterface):
    """
    Apples pay +1 and disappear. The portal pays +10, respawns the agent at a
    random free cell and regenerates the apples. Episodes last episode_cap steps.

    Observation: four one-hot planes (wall, agent, apple, portal), flattened.
    Actions: 0 up, 1 down, 2 left, 3 right; moves into walls leave the agent in place.
    """

    def __init__(
        self,
        width: int = 8,
        height: int = 8,
        n_apples: int = 4,
        episode_cap: int = 500,
        layout_seed: Optional[int] = None,
    ):
        if width < 3 or height < 3:
            raise ConfigurationError(f"GridMaze needs at least 3x3 cells, got {width}x{height}")
        self.width = width
        self.height = height
        self.n_apples = n_apples
        self.episode_cap = episode_cap
        self.layout_seed = layout_seed

        self._rng = np.random.default_rng()
        self.walls: Optional[np.ndarray] = None
        self.portal: Optional[Cell] = None
        self.agent: Cell = (0, 0)
        self.apples: set = set()
        self.steps = 0

        if layout_seed is not None:
            self.walls, self.portal = generate_layout(width, height, np.random.default_rng(layout_seed))

    @property
    def observation_size(self) -> int:
        return N_CHANNELS * self.width * self.height

    @property
    def action_size(self) -> int:
        return len(MOVES)

    @property
    def reward_bound(self) -> float:
        return PORTAL_REWARD

    def layout_key(self) -> bytes:
        """Bytes identifying walls and portal; equal keys mean equal layouts"""
        return self.walls.tobytes() + bytes(self.portal)

    def _free_cells(self, exclude: set) -> List[Cell]:
        return [
            (int(r), int(c)) for r, c in np.argwhere(~self.walls)
            if (int(r), int(c)) not in exclude
        ]

    def _spawn_agent(self) -> None:
        cells = self._free_cells({self.portal})
        if not cells:
            raise ConfigurationError("maze has no free cell besides the portal")
        self.agent = cells[int(self._rng.integers(len(cells)))]

    def _place_apples(self) -> None:
        cells = self._free_cells({self.portal, self.agent})
        count = min(self.n_apples, len(cells))
        chosen = self._rng.choice(len(cells), size=count, replace=False) if count else []
        self.apples = {cells[int(i)] for i in chosen}

    def observe(self) -> np.ndarray:
        planes = np.zeros((N_CHANNELS, self.height, self.width), dtype=np.float64)
        planes[0] = self.walls
        planes[1][self.agent] = 1.0
        for cell in self.apples:
            planes[2][cell] = 1.0
        planes[3][self.portal] = 1.0
        return planes.reshape(-1)

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if self.layout_seed is None:
            self.walls, self.portal = generate_layout(self.width, self.height, self._rng)
        self.steps = 0
        self._spawn_agent()
        self._place_apples()
        return self.observe()

    def step(self, action: Union[int, np.ndarray]) -> EnvStep:
        action = int(action)
        if not 0 <= action < len(MOVES):
            raise ConfigurationError(f"GridMaze action must be in [0, {len(MOVES)}), got {action}")
        if self.walls is None:
            raise ConfigurationError("GridMaze.step called before reset")

        dr, dc = MOVES[action]
        r, c = self.agent[0] + dr, self.agent[1] + dc
        if 0 <= r < self.height and 0 <= c < self.width and not self.walls[r, c]:
            self.agent = (r, c)

        reward = 0.0
        if self.agent in self.apples:
            self.apples.discard(self.agent)
            reward += APPLE_REWARD
        if self.agent == self.portal:
            reward += PORTAL_REWARD
            self._spawn_agent()
            self._place_apples()

        self.steps += 1
        terminal = self.steps >= self.episode_cap
        return EnvStep(next_observation=self.observe(), reward=reward, terminal=terminal)

    def to_tabular(self) -> TabularMDP:
        """
        Frozen layout without apples or respawn: states are free cells, entering
        the portal pays +10 and terminates
        """
        if self.walls is None:
            self.reset(0)
        cells = self._free_cells(set())
        index = {cell: i for i, cell in enumerate(cells)}
        n = len(cells)
        transitions = np.zeros((n, len(MOVES), n))
        rewards = np.zeros((n, len(MOVES)))
        terminal = np.zeros(n, dtype=bool)
        terminal[index[self.portal]] = True

        for cell, s in index.items():
            for a, (dr, dc) in enumerate(MOVES):
                if terminal[s]:
                    transitions[s, a, s] = 1.0
                    continue
                r, c = cell[0] + dr, cell[1] + dc
                nxt = (r, c) if (r, c) in index else cell
                transitions[s, a, index[nxt]] = 1.0
                rewards[s, a] = PORTAL_REWARD if nxt == self.portal else 0.0
        return TabularMDP(transitions=transitions, rewards=rewards, terminal=terminal)
