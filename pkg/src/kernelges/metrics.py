"""Structure-recovery metrics and the residual-independence diagnostic.

Skeleton F1 and SHD compare equivalence classes per unordered vertex pair;
SHD charges one unit for a missing or extra adjacency and one for a wrong
mark (reversed, or directed where the other graph is undirected), and is
normalized by the q(q-1)/2 vertex pairs. HSIC is the biased trace statistic
with plain median-distance bandwidths.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import cho_solve
from scipy.spatial.distance import pdist, squareform

from .graphs import Cpdag, Dag
from .kernels import as_block, chol_factor_logdet, kernel_matrix

# A residual dimension whose values span less than this is treated as
# constant and contributes zero dependence: the adaptive median bandwidth
# would otherwise blow microscopic numerical scatter up to order-one
# statistics.
CONSTANT_SPAN = 1e-5


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    shd: int
    normalized_shd: float
    q: int


def _check_nodes(a, b):
    if set(a.nodes) != set(b.nodes):
        raise ValueError("graphs are over different node sets")


def _adjacency_pairs(g):
    if isinstance(g, Dag):
        return {frozenset(e) for e in g.edges}
    return {frozenset(e) for e in g.directed} | {frozenset(e) for e in g.undirected}


def skeleton_f1(estimated, truth):
    """Precision, recall and F1 of the undirected adjacency structure."""
    _check_nodes(estimated, truth)
    est = _adjacency_pairs(estimated)
    true = _adjacency_pairs(truth)
    if not est and not true:
        return 1.0, 1.0, 1.0
    hit = len(est & true)
    precision = hit / len(est) if est else 0.0
    recall = hit / len(true) if true else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, f1


def _pair_mark(g, a, b):
    if g.has_directed(a, b):
        return "->"
    if g.has_directed(b, a):
        return "<-"
    if g.has_undirected(a, b):
        return "--"
    return None


def normalized_shd(estimated, truth):
    """Structural Hamming distance between equivalence classes.

    Each vertex pair contributes one unit if the two graphs disagree about
    it at all: adjacency present in only one, or present in both with
    different marks. DAG inputs are converted to their class representation
    first.
    """
    if isinstance(estimated, Dag):
        estimated = estimated.to_cpdag()
    if isinstance(truth, Dag):
        truth = truth.to_cpdag()
    _check_nodes(estimated, truth)
    nodes = estimated.nodes
    shd = 0
    for a, b in combinations(nodes, 2):
        if _pair_mark(estimated, a, b) != _pair_mark(truth, a, b):
            shd += 1
    pairs = len(nodes) * (len(nodes) - 1) // 2
    return shd, shd / pairs


def structure_report(estimated, truth):
    """Bundle skeleton F1 and normalized SHD against a ground-truth DAG."""
    precision, recall, f1 = skeleton_f1(estimated, truth)
    shd, norm = normalized_shd(estimated, truth)
    return EvalReport(precision, recall, f1, shd, norm, q=len(truth.nodes))


def _median_bandwidth(distances):
    if distances.size == 0:
        return 0.0
    med = float(np.median(distances))
    if med > 0.0:
        return med
    positive = distances[distances > 0.0]
    return float(np.median(positive)) if positive.size else 0.0


def _centered_gram(block):
    block = as_block(block)
    n = block.shape[0]
    distances = pdist(block)
    sigma = _median_bandwidth(distances)
    if sigma == 0.0:
        gram = np.ones((n, n))
    else:
        gram = np.exp(squareform(distances) ** 2 / (-2.0 * sigma**2))
    centered = gram - gram.mean(axis=0)
    return centered - centered.mean(axis=1)[:, None]


def hsic_biased(a, b):
    """Biased HSIC estimate (1/n^2) Tr(K_a H K_b H) with median bandwidths."""
    a, b = as_block(a), as_block(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("blocks must have the same number of samples")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    return float(np.sum(_centered_gram(a) * _centered_gram(b))) / n**2


def residual_hsic_diagnostic(dataset, target, parents, candidate, params):
    """Average HSIC between each kernel-feature residual dimension and the
    candidate variable.

    Feature dimension i of the target has the column K_X[:, i] as its
    regression responses, so its residual across observations is
    sigma_eps^2 (K_PA + sigma_eps^2 I)^(-1) K_X[:, i], the gap between the
    responses and the GP posterior mean.
    """
    parents = tuple(parents or ())
    if candidate == target or candidate in parents:
        raise ValueError("candidate must be outside the scored family")
    params.validate()
    x = dataset.std_block(target)
    n = dataset.n
    K_X = kernel_matrix(x, params.sigma_x)
    if parents:
        K_P = kernel_matrix(dataset.joint_block(parents), params.sigma_p)
    else:
        K_P = np.ones((n, n))
    factor, _ = chol_factor_logdet(K_P + params.sigma_eps**2 * np.eye(n))
    # cho_solve gives sigma_eps^2 Ktheta^-1 K_X whose column i holds the
    # residual of feature dimension i across observations; transpose so the
    # loop below walks dimensions.
    residuals = params.sigma_eps**2 * cho_solve(factor, K_X).T

    centered_z = _centered_gram(dataset.std_block(candidate))
    upper = np.triu_indices(n, k=1)
    total = 0.0
    for row in residuals:
        if np.ptp(row) <= CONSTANT_SPAN:
            continue
        d2 = (row[:, None] - row[None, :]) ** 2
        sigma = _median_bandwidth(np.sqrt(d2[upper]))
        gram = np.exp(d2 / (-2.0 * sigma**2))
        total += float(np.sum(gram * centered_z))
    return total / (n**2 * n)
