"""Regenerate the problem files shipped in ``src/adiaswitch/problems``."""

from pathlib import Path

import numpy as np

from adiaswitch.io import problem_to_dict, to_json_text
from adiaswitch.operators import make_problem

OUT = Path(__file__).resolve().parents[1] / "src" / "adiaswitch" / "problems"


def canonical():
    h0 = np.diag([0.0, 0.0, 1.0, 2.0])
    v = np.array([
        [1.0, 0.5, 0.3, 0.2],
        [0.5, -1.0, 0.2, 0.4],
        [0.3, 0.2, 1.5, 0.1],
        [0.2, 0.4, 0.1, 1.0],
    ])
    return h0, v, "4x4 family with a doubly degenerate ground level"


def commuting_toy():
    return np.zeros((2, 2)), np.diag([1.0, -1.0]), "H0 = 0, V = diag(1, -1)"


def lift():
    h0 = np.diag([0.0, 0.0, 1.0, 1.7, 2.5])
    v = np.array([
        [0.3, 0.0, 0.4, 0.25, 0.1],
        [0.0, 0.3, 0.1, -0.3, 0.35],
        [0.4, 0.1, 0.6, 0.2, 0.1],
        [0.25, -0.3, 0.2, -0.2, 0.15],
        [0.1, 0.35, 0.1, 0.15, 0.4],
    ])
    return h0, v, "first-order shifts coincide; V R0 V splits them"


def permanent():
    h = np.diag([0.0, 1.0, 2.0])
    w = np.array([[0.4, 0.3, 0.2], [0.3, -0.2, 0.25], [0.2, 0.25, 0.3]])
    return np.kron(np.eye(2), h), np.kron(np.eye(2), w), "two identical copies: the tracked pair never splits"


def large_rotation():
    """Tracked vector ends exactly orthogonal to the e1 branch it starts on.

    The 3x3 block on (e2, e3, e4) fixes an eigenvector x; the couplings of e1
    are chosen orthogonal to x's excited part, so x stays an eigenvector of
    H0 + V after e1 is coupled in.
    """
    h0 = np.diag([0.0, 0.0, 1.0, 2.0])
    block = np.array([[1.5, -1.5, 0.1], [-1.5, -1.5, 1.5], [0.1, 1.5, -1.5]])
    _, vecs = np.linalg.eigh(h0[1:, 1:] + block)
    x = vecs[:, 0]
    v = np.zeros((4, 4))
    v[1:, 1:] = block
    v[0, 0] = -0.4
    v[0, 2:] = v[2:, 0] = 1.8 * np.array([x[2], -x[1]])
    return h0, v, "the lowest tracked branch turns through a right angle"


PROBLEMS = {
    "canonical": canonical,
    "commuting_toy": commuting_toy,
    "lift": lift,
    "permanent": permanent,
    "large_rotation": large_rotation,
}


def write(name, h0, v, description):
    data = {"name": name, "description": description}
    data.update(problem_to_dict(make_problem(h0, v)))
    (OUT / f"{name}.json").write_text(to_json_text(data))


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in PROBLEMS.items():
        write(name, *build())


if __name__ == "__main__":
    main()
