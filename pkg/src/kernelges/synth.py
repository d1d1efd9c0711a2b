"""Synthetic structural-equation benchmarks with retained ground truth.

Each non-root variable is x = g(f(sum of parent values) + noise), with f and
g drawn uniformly from a fixed menu of nonlinearities. Multi-dimensional
variables project their parents to the child dimension with an all-ones
matrix (every output dimension sees the same parent sum); mixed and discrete
datasets quantile-bin a subset of columns onto a small integer range after
the continuous pass. Everything is reproducible from the seed of a single
counter-based Philox stream.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Variable
from .graphs import Dag

CONTINUOUS = "continuous"
MIXED = "mixed"
DISCRETE = "discrete"
MULTIDIM = "multidim"
DATA_KINDS = (CONTINUOUS, MIXED, DISCRETE, MULTIDIM)

FUNCTION_NAMES = ("linear", "sin", "cos", "tanh", "exp", "power")
LINEAR_WEIGHTS = (0.5, 2.5)
POWER_EXPONENTS = (1, 2, 3)
EXP_CLIP = 5.0
NOISE_KINDS = ("gaussian", "uniform")
ROOT_KINDS = ("gaussian", "uniform")
DISCRETE_RANGES = ((1, 5), (1, 20))

_MAX_MECHANISM_RETRIES = 20


@dataclass(frozen=True)
class FunctionSpec:
    """One scalar nonlinearity from the mechanism menu."""

    name: str
    weight: float | None = None
    exponent: int | None = None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.name == "linear":
            return self.weight * u
        if self.name == "sin":
            return np.sin(u)
        if self.name == "cos":
            return np.cos(u)
        if self.name == "tanh":
            return np.tanh(u)
        if self.name == "exp":
            # unbounded inputs compose down the topological order; clip to
            # keep the cascade finite
            return np.exp(np.clip(u, -EXP_CLIP, EXP_CLIP))
        if self.name == "power":
            return u**self.exponent
        raise ValueError(f"unknown function {self.name!r}")


@dataclass(frozen=True)
class Mechanism:
    f: FunctionSpec
    g: FunctionSpec
    noise: str

    def output(self, parent_sum, noise_draw):
        return self.g(self.f(parent_sum) + noise_draw)


@dataclass(frozen=True)
class GenConfig:
    num_vars: int = 8
    density: float = 0.5
    n: int = 200
    kind: str = CONTINUOUS
    discrete_ratio: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.num_vars < 2:
            raise ValueError("need at least two variables")
        if not 0.0 < self.density <= 1.0:
            raise ValueError("density must be in (0, 1]")
        if self.n < 1:
            raise ValueError("need at least one sample")
        if self.kind not in DATA_KINDS:
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.discrete_ratio is not None and not 0.0 <= self.discrete_ratio <= 1.0:
            raise ValueError("discrete_ratio must be in [0, 1]")

    @property
    def ratio(self):
        if self.discrete_ratio is not None:
            return self.discrete_ratio
        if self.kind == MIXED:
            return 0.5
        if self.kind == DISCRETE:
            return 1.0
        return 0.0


@dataclass
class GroundTruth:
    config: GenConfig
    dag: Dag
    dims: dict
    roots: dict
    mechanisms: dict
    noise: dict = field(repr=False)
    continuous: np.ndarray = field(repr=False)
    discrete_vars: dict = field(default_factory=dict)


def _function_spec(rng):
    name = FUNCTION_NAMES[rng.integers(len(FUNCTION_NAMES))]
    weight = exponent = None
    if name == "linear":
        weight = LINEAR_WEIGHTS[rng.integers(2)]
    elif name == "power":
        exponent = POWER_EXPONENTS[rng.integers(3)]
    return FunctionSpec(name, weight, exponent)


def sample_mechanism(rng):
    """Draw (f, g, noise kind) uniformly from the mechanism menu."""
    f = _function_spec(rng)
    g = _function_spec(rng)
    noise = NOISE_KINDS[rng.integers(2)]
    return Mechanism(f, g, noise)


def random_dag(q, density, rng, names=None):
    """Random DAG with round(density * q(q-1)/2) edges, oriented along a
    random node permutation so acyclicity holds by construction."""
    if q < 2:
        raise ValueError("need at least two nodes")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    names = tuple(names) if names is not None else tuple(f"X{i + 1}" for i in range(q))
    order = rng.permutation(q)
    pairs = [
        (int(order[i]), int(order[j])) for i in range(q) for j in range(i + 1, q)
    ]
    count = int(round(density * q * (q - 1) / 2))
    chosen = rng.choice(len(pairs), size=count, replace=False)
    edges = {(names[pairs[k][0]], names[pairs[k][1]]) for k in sorted(chosen)}
    return Dag(names, edges)


def _draw_noise(rng, kind, shape):
    # Gaussian mechanism noise uses scale 0.5, matching the uniform half-width.
    if kind == "gaussian":
        return rng.normal(0.0, 0.5, size=shape)
    return rng.uniform(-0.5, 0.5, size=shape)


def _draw_root(rng, kind, shape):
    if kind == "gaussian":
        return rng.standard_normal(shape)
    return rng.uniform(-1.0, 1.0, size=shape)


def _quantile_codes(column, low, high):
    """Equal-frequency binning onto the integers low..high."""
    levels = high - low + 1
    edges = np.quantile(column, np.linspace(0.0, 1.0, levels + 1)[1:-1])
    return (low + np.searchsorted(edges, column, side="right")).astype(float)


def generate(config):
    """Sample one dataset and its full ground truth from a GenConfig."""
    rng = np.random.Generator(np.random.Philox(config.seed))
    q, n = config.num_vars, config.n
    dag = random_dag(q, config.density, rng)
    names = dag.nodes
    if config.kind == MULTIDIM:
        dims = {v: int(rng.integers(1, 6)) for v in names}
    else:
        dims = {v: 1 for v in names}

    columns = {}
    roots = {}
    mechanisms = {}
    noise = {}
    for v in dag.topological_order():
        parents = dag.parents(v)
        shape = (n, dims[v])
        if not parents:
            kind = ROOT_KINDS[rng.integers(2)]
            roots[v] = kind
            columns[v] = _draw_root(rng, kind, shape)
            continue
        parent_sum = np.sum(
            np.hstack([columns[p] for p in sorted(parents, key=names.index)]),
            axis=1,
        )
        parent_block = np.repeat(parent_sum[:, None], dims[v], axis=1)
        for attempt in range(_MAX_MECHANISM_RETRIES):
            mech = sample_mechanism(rng)
            draw = _draw_noise(rng, mech.noise, shape)
            out = mech.output(parent_block, draw)
            if np.isfinite(out).all() and np.ptp(out) > 1e-12:
                break
        else:
            raise RuntimeError(
                f"could not find a non-degenerate mechanism for {v!r}"
            )
        mechanisms[v] = mech
        noise[v] = draw
        columns[v] = out

    continuous = np.hstack([columns[v] for v in names])

    discrete_vars = {}
    ratio = config.ratio
    k = int(round(ratio * q))
    if k > 0:
        picked = rng.choice(q, size=k, replace=False)
        for idx in sorted(int(i) for i in picked):
            low, high = DISCRETE_RANGES[rng.integers(2)]
            discrete_vars[names[idx]] = (low, high)

    values = continuous.copy()
    variables = []
    start = 0
    for v in names:
        d = dims[v]
        if v in discrete_vars:
            low, high = discrete_vars[v]
            for t in range(d):
                values[:, start + t] = _quantile_codes(
                    continuous[:, start + t], low, high
                )
            variables.append(Variable(v, dim=d, discrete=True, levels=(low, high)))
        else:
            variables.append(Variable(v, dim=d))
        start += d

    truth = GroundTruth(
        config=config,
        dag=dag,
        dims=dims,
        roots=roots,
        mechanisms=mechanisms,
        noise=noise,
        continuous=continuous,
        discrete_vars=discrete_vars,
    )
    return Dataset(variables, values), truth


def chain_cos_squared(n, seed):
    """The three-variable chain Z -> Y -> X with cos-squared mechanisms used
    throughout the residual-diagnostic discussion."""
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal(n)
    y = np.cos(1.5 * z**2 + rng.normal(0.0, 0.5, n)) ** 2
    x = np.cos(1.5 * y**2 + rng.normal(0.0, 0.5, n)) ** 2
    ds = Dataset(
        [Variable("Z"), Variable("Y"), Variable("X")],
        np.column_stack([z, y, x]),
    )
    return ds, Dag(("Z", "Y", "X"), {("Z", "Y"), ("Y", "X")})
