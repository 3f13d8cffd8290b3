'''
    density
    =======

    Density matrices built from real vectors.

    A density matrix is a symmetric, positive semidefinite matrix of trace 1.
    Here it is a weighted mixture of dyads (outer products of a vector with
    itself):

        rho = sum_i k_i * u_i u_i^T,    k_i >= 0,    sum_i k_i = 1

    Each vector is scaled to unit L2 norm before the outer product unless
    `normalize=False`, which makes every dyad trace 1. Vectors with norm
    below `ZERO_NORM` contribute the zero matrix instead of NaN, since dead
    feature maps are common after a ReLU.

    # Sample Use

    .. code-block:: python

        import numpy as np
        from qimnet import density

        rho = density.mixture(
            [np.array([1., 0.]), np.array([0., 1.])],
            density.MixtureWeights(np.array([0.3, 0.7])),
        )
        report = density.validate_density(rho, trials=100)
        assert report.ok
'''

import dataclasses
import typing

import numpy as np

from . import errors
from . import tensor

# Norms below this are treated as the zero vector.
ZERO_NORM = 1e-12
# Tolerances used by validation.
TRACE_TOLERANCE = 1e-6
PSD_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12


@dataclasses.dataclass(frozen=True)
class DensityMatrix:
    '''Symmetric d x d matrix built from weighted dyads.'''

    entries: np.ndarray
    normalized: bool

    def __post_init__(self):
        entries = self.entries
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] == 0:
            raise errors.DimensionError(f'Density matrices must be square and non-empty, got {entries.shape}.')
        tensor.freeze(entries)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def trace(self):
        return float(np.trace(self.entries))


@dataclasses.dataclass(frozen=True)
class MixtureWeights:
    '''Non-negative mixture weights summing to 1.'''

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise errors.DimensionError(f'Mixture weights must be a non-empty vector, got shape {weights.shape}.')
        if np.any(weights < 0):
            raise errors.WeightError(f'Mixture weights must be non-negative, got {weights.min()}.')
        total = float(weights.sum())
        if abs(total - 1) > TRACE_TOLERANCE:
            raise errors.WeightError(f'Mixture weights must sum to 1, got {total}.')
        object.__setattr__(self, 'weights', tensor.freeze(weights))

    def __len__(self):
        return self.weights.size

    @staticmethod
    def uniform(count):
        '''Equal weights for `count` components.'''
        return MixtureWeights(np.full(count, 1.0 / count))

    @staticmethod
    def from_logits(logits):
        '''Weights as the softmax of unconstrained logits.'''
        return MixtureWeights(tensor.softmax(np.asarray(logits, dtype=np.float64)))


# CONSTRUCTION
# ------------


def normalize_vec(u):
    '''
    Scale a vector to unit L2 norm.

    :return: Tuple of the unit vector and a flag set when the input had
        norm below `ZERO_NORM`, in which case the zero vector is returned.
    '''

    u = np.asarray(u)
    norm = np.linalg.norm(u)
    if norm < ZERO_NORM:
        return np.zeros_like(u), True
    if norm == 1:
        return u.copy(), False
    return u / norm, False


def _outer(u):
    # Products commute exactly, so the outer product is exactly symmetric.
    return np.outer(u, u)


def dyad(u, normalize=True):
    '''
    Outer product of a vector with itself.

    With `normalize` set, the vector is first scaled to unit norm so the
    result has trace 1. A zero input yields the zero matrix, unnormalized.
    '''

    u = np.asarray(u)
    if u.ndim != 1 or u.size == 0:
        raise errors.DimensionError(f'dyad expects a non-empty vector, got shape {u.shape}.')
    if not normalize:
        return DensityMatrix(_outer(u), normalized=False)
    unit, was_zero = normalize_vec(u)
    return DensityMatrix(_outer(unit), normalized=not was_zero)


def mixture(vectors, weights, normalize=True):
    '''
    Weighted mixture of dyads, sum_i k_i * dyad(v_i).

    :param vectors: Sequence of length-d vectors.
    :param weights: MixtureWeights, one per vector.
    :param normalize: (Optional) Normalize each vector before the dyad.
    '''

    vectors = [np.asarray(v) for v in vectors]
    if not isinstance(weights, MixtureWeights):
        weights = MixtureWeights(np.asarray(weights))
    if len(vectors) != len(weights):
        raise errors.DimensionError(f'Got {len(vectors)} vectors but {len(weights)} weights.')
    if len({v.shape for v in vectors}) != 1:
        raise errors.DimensionError('Mixture vectors must share one length.')

    entries = np.zeros((vectors[0].size, vectors[0].size), dtype=np.result_type(vectors[0], np.float64))
    normalized = normalize
    for vector, weight in zip(vectors, weights.weights):
        component = dyad(vector, normalize)
        normalized = normalized and component.normalized
        entries += weight * component.entries
    return DensityMatrix(entries, normalized=normalized)


# VALIDATION
# ----------


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    '''Result of checking the density-matrix properties.'''

    asymmetry: float
    trace_error: float
    min_quadratic_form: float
    normalized: bool

    @property
    def symmetric(self):
        return self.asymmetry <= SYMMETRY_TOLERANCE

    @property
    def unit_trace(self):
        return self.trace_error <= TRACE_TOLERANCE

    @property
    def positive_semidefinite(self):
        return self.min_quadratic_form >= -PSD_TOLERANCE

    @property
    def ok(self):
        '''All checks pass; trace is only required of normalized matrices.'''

        trace_ok = self.unit_trace or not self.normalized
        return self.symmetric and self.positive_semidefinite and trace_ok


def validate_density(
    rho: typing.Union[DensityMatrix, np.ndarray],
    trials: int = 100,
    seed: int = 0,
) -> ValidationReport:
    '''
    Report symmetry, trace and positive semidefiniteness of a matrix.

    Positive semidefiniteness is tested with `trials` random unit vectors
    x, reporting the minimum of x^T rho x. A bare array is treated as a
    claimed normalized density matrix.
    '''

    if isinstance(rho, DensityMatrix):
        entries = rho.entries
        normalized = rho.normalized
    else:
        entries = np.asarray(rho, dtype=np.float64)
        normalized = True
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise errors.DimensionError(f'Expected a square matrix, got shape {entries.shape}.')

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((max(trials, 1), entries.shape[0]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    forms = np.einsum('ti,ij,tj->t', directions, entries, directions)

    return ValidationReport(
        asymmetry=float(np.max(np.abs(entries - entries.T))),
        trace_error=abs(float(np.trace(entries)) - 1),
        min_quadratic_form=float(forms.min()),
        normalized=normalized,
    )
