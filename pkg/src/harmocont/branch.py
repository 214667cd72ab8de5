"""Containers shared by equilibrium and periodic-orbit continuation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class StepConfig:
    """Step-size policy and stopping rules of a continuation run.

    ``bounds`` maps a quantity name (system parameter, ``"T"``, a Fourier
    slot or ``"K"``) to a ``(lo, hi)`` interval; leaving it ends the branch
    with an ``EP`` point placed exactly on the bound.  ``labels`` maps a
    quantity name to values at which labeled points are inserted.
    ``max_turn`` bounds the angle (radians) between consecutive tangents;
    steps turning further are halved so that tight folds are resolved.
    """

    ds: float = 1e-2
    ds_min: float = 1e-7
    ds_max: float = 0.5
    max_steps: int = 200
    max_halvings: int = 10
    grow: float = 1.3
    fast_iterations: int = 3
    newton_tol: float = 1e-10
    newton_maxiter: int = 10
    bounds: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    detect_folds: bool = True
    adapt_every: int = 0
    max_turn: float = 0.3


@dataclass
class BranchPoint:
    solution: Any
    values: dict
    label: str | None = None
    arclength: float = 0.0
    step: float = 0.0
    iterations: int = 0
    tangent: np.ndarray | None = field(default=None, repr=False)


@dataclass
class ContinuationBranch:
    points: list = field(default_factory=list)
    free: tuple = ()
    stalled: bool = False
    message: str = ""

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    def column(self, name):
        return np.array([pt.values[name] for pt in self.points])

    def labeled(self, label=None):
        """Labeled points, optionally restricted to labels starting with ``label``."""
        return [
            pt
            for pt in self.points
            if pt.label is not None and (label is None or pt.label.startswith(label))
        ]
