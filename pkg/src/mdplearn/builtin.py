"""Built-in example systems and random model generation.

The Reber grammar chain and the street-crossing MDP are small hidden-state
benchmarks; the grid world is a parametric family of deterministic-by-layout
MDPs with terrain-dependent slip.
"""

from collections.abc import Mapping, Sequence

import numpy as np

from .models import ERR_LABEL, ActionSet, Alphabet, Model

REBER_ACTION = "next"

# Reber chain transitions: (from_state, label, to_state, probability),
# states numbered 0..6 for s1..s7.
_REBER_EDGES = [
    (0, "B", 1, 1.0),
    (1, "T", 2, 0.5),
    (1, "P", 3, 0.5),
    (2, "S", 2, 0.6),
    (2, "X", 4, 0.4),
    (3, "T", 3, 0.7),
    (3, "V", 5, 0.3),
    (4, "S", 6, 0.5),
    (4, "X", 3, 0.5),
    (5, "V", 6, 0.5),
    (5, "P", 4, 0.5),
    (6, "E", 6, 1.0),
]


def reber_model() -> Model:
    """Seven-state labelled Markov chain generating Reber grammar strings.

    Single action ``next``; the first emission is always ``start``.
    """
    alphabet = Alphabet(["start", "B", "T", "P", "S", "X", "V", "E"])
    actions = ActionSet([REBER_ACTION])
    S = 7
    iota = np.zeros((len(alphabet), S))
    iota[alphabet.index("start"), 0] = 1.0
    tau = np.zeros((1, S, len(alphabet), S))
    for s, label, t, p in _REBER_EDGES:
        tau[0, s, alphabet.index(label), t] = p
    return Model(alphabet, actions, iota, tau)


def street_crossing_model(p: float = 0.75) -> Model:
    """Street-crossing MDP: five states, actions ``stay``/``move``.

    ``p`` is the probability that a car seen on the left/right behaves as
    expected.  From s3 the agent either bumps into the car (move) or avoids
    it (stay); both outcomes are absorbing.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly between 0 and 1, got {p}")
    alphabet = Alphabet(["start", "left", "right", "bump", "avoid"])
    actions = ActionSet(["stay", "move"])
    s1, s2, s3, hit, ok = range(5)
    S = 5
    iota = np.zeros((len(alphabet), S))
    iota[alphabet.index("start"), s1] = 1.0
    tau = np.zeros((2, S, len(alphabet), S))
    stay, move = 0, 1
    left, right = alphabet.index("left"), alphabet.index("right")
    bump, avoid = alphabet.index("bump"), alphabet.index("avoid")
    tau[stay, s1, left, s3] = p
    tau[stay, s1, right, s1] = 1 - p
    tau[move, s1, left, s2] = p
    tau[move, s1, right, s3] = 1 - p
    tau[stay, s2, right, s3] = p
    tau[stay, s2, left, s2] = 1 - p
    tau[move, s2, right, s1] = p
    tau[move, s2, left, s3] = 1 - p
    tau[move, s3, bump, hit] = 1.0
    tau[stay, s3, avoid, ok] = 1.0
    for a in (stay, move):
        tau[a, hit, bump, hit] = 1.0
        tau[a, ok, avoid, ok] = 1.0
    return Model(alphabet, actions, iota, tau)


GRID_ACTIONS = ("N", "E", "S", "W")

_MOVES = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
# Diagonal slip targets flanking each direction of travel.
_DIAGONALS = {
    "N": ((-1, -1), (-1, 1)),
    "E": ((-1, 1), (1, 1)),
    "S": ((1, -1), (1, 1)),
    "W": ((-1, -1), (1, -1)),
}


def grid_world_model(
    layout: Sequence[str],
    slip: Mapping[str, float],
    initial: tuple[int, int],
    label_names: Mapping[str, str] | None = None,
) -> Model:
    """Grid-world MDP over the cells of a rectangular character layout.

    Each cell is a hidden state; its character is a terrain with a slip
    probability.  Moving toward a cell of terrain ``c`` succeeds with
    probability ``1 - slip[c]`` and otherwise slips to one of the two
    diagonal cells flanking the direction of travel, split evenly; a
    diagonal that falls off the grid collapses onto the intended cell.
    Moving off the grid is unavailable: the action emits ``err`` and leaves
    the state unchanged.  The emitted label is the terrain name of the cell
    arrived at.  ``label_names`` renames terrains (default: identity, with
    ``g`` emitting ``goal``).
    """
    rows = [str(r) for r in layout]
    if not rows:
        raise ValueError("layout must not be empty")
    width = len(rows[0])
    if width == 0 or any(len(r) != width for r in rows):
        raise ValueError("layout must be rectangular with non-empty rows")
    height = len(rows)
    terrains = sorted({ch for row in rows for ch in row})
    for ch in terrains:
        if ch not in slip:
            raise ValueError(f"terrain {ch!r} has no slip probability")
        if not 0.0 <= slip[ch] < 1.0:
            raise ValueError(f"slip[{ch!r}] must lie in [0, 1), got {slip[ch]}")
    names = {ch: ch for ch in terrains}
    if "g" in names:
        names["g"] = "goal"
    if label_names:
        names.update(label_names)
    r0, c0 = initial
    if not (0 <= r0 < height and 0 <= c0 < width):
        raise ValueError(f"initial cell {initial} outside the {height}x{width} layout")

    label_order = sorted({names[ch] for ch in terrains})
    if ERR_LABEL in label_order:
        raise ValueError(f"terrain label {ERR_LABEL!r} is reserved")
    alphabet = Alphabet(label_order)
    actions = ActionSet(GRID_ACTIONS)
    S = height * width
    err = alphabet.index(ERR_LABEL)

    def cell(r: int, c: int) -> int:
        return r * width + c

    def inside(r: int, c: int) -> bool:
        return 0 <= r < height and 0 <= c < width

    def terrain_label(r: int, c: int) -> int:
        return alphabet.index(names[rows[r][c]])

    iota = np.zeros((len(alphabet), S))
    iota[terrain_label(r0, c0), cell(r0, c0)] = 1.0

    tau = np.zeros((len(actions), S, len(alphabet), S))
    for r in range(height):
        for c in range(width):
            s = cell(r, c)
            for a, direction in enumerate(GRID_ACTIONS):
                dr, dc = _MOVES[direction]
                tr, tc = r + dr, c + dc
                if not inside(tr, tc):
                    tau[a, s, err, s] = 1.0
                    continue
                p_slip = slip[rows[tr][tc]]
                outcomes = [(tr, tc, 1.0 - p_slip)]
                for dr2, dc2 in _DIAGONALS[direction]:
                    gr, gc = r + dr2, c + dc2
                    if inside(gr, gc):
                        outcomes.append((gr, gc, p_slip / 2.0))
                    else:
                        outcomes.append((tr, tc, p_slip / 2.0))
                for orow, ocol, mass in outcomes:
                    if mass > 0.0:
                        tau[a, s, terrain_label(orow, ocol), cell(orow, ocol)] += mass
    return Model(alphabet, actions, iota, tau)


def random_model(
    n_states: int,
    alphabet: Alphabet | Sequence[str],
    actions: ActionSet | Sequence[str],
    seed: int,
) -> Model:
    """Random model with flat-Dirichlet rows, strictly positive everywhere.

    Rows are drawn as normalized exponential variates, so every entry of
    iota and tau is positive; useful as an EM starting point.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if not isinstance(alphabet, Alphabet):
        alphabet = Alphabet(alphabet)
    if not isinstance(actions, ActionSet):
        actions = ActionSet(actions)
    rng = np.random.default_rng(seed)
    L, A, S = len(alphabet), len(actions), n_states
    iota = np.maximum(rng.exponential(size=(L, S)), 1e-300)
    iota /= iota.sum()
    tau = np.maximum(rng.exponential(size=(A, S, L, S)), 1e-300)
    tau /= tau.sum(axis=(2, 3), keepdims=True)
    return Model(alphabet, actions, iota, tau)
