"""Dataset container: named, possibly multi-dimensional, mixed-type variables."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Variable:
    """One observed variable.

    dim is the number of columns the variable occupies; discrete variables
    carry their integer code range in levels as (low, high).
    """

    name: str
    dim: int = 1
    discrete: bool = False
    levels: tuple | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"variable {self.name!r} must have dim >= 1")
        if self.discrete and self.levels is None:
            raise ValueError(f"discrete variable {self.name!r} needs a levels range")


class Dataset:
    """Sample matrix with per-variable column slices.

    Continuous dimensions are standardized (zero mean, unit variance) on
    demand for scoring; discrete variables keep their integer codes.
    """

    def __init__(self, variables, values):
        self.variables = tuple(variables)
        self.values = np.asarray(values, dtype=float)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        total = sum(v.dim for v in self.variables)
        if self.values.ndim != 2 or self.values.shape[1] != total:
            raise ValueError(
                f"values must be (n, {total}) to match declared dimensions, "
                f"got {self.values.shape}"
            )
        self._slices = {}
        start = 0
        for v in self.variables:
            self._slices[v.name] = slice(start, start + v.dim)
            start += v.dim
        self._std = None

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"unknown variable {name!r}")

    def block(self, name):
        """Raw (n, dim) block of one variable."""
        return self.values[:, self._slices[name]]

    def _standardized(self):
        if self._std is None:
            out = self.values.copy()
            for v in self.variables:
                if v.discrete:
                    continue
                cols = out[:, self._slices[v.name]]
                cols -= cols.mean(axis=0)
                std = cols.std(axis=0)
                std[std == 0.0] = 1.0
                cols /= std
            self._std = out
        return self._std

    def std_block(self, name):
        """Standardized (n, dim) block; discrete codes pass through unchanged."""
        return self._standardized()[:, self._slices[name]]

    def joint_block(self, names):
        """Concatenated standardized block of several variables.

        Column order follows the dataset's variable order, so the block (and
        anything distance-based computed from it) does not depend on the
        order in which names are given.
        """
        ordered = [v.name for v in self.variables if v.name in set(names)]
        missing = set(names) - set(ordered)
        if missing:
            raise KeyError(f"unknown variables {sorted(missing)}")
        if not ordered:
            raise ValueError("need at least one variable name")
        std = self._standardized()
        return np.hstack([std[:, self._slices[name]] for name in ordered])
