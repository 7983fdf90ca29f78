"""Observation tensor, factor state and posterior storage
A module that defines the data model shared by the samplers and the Gibbs engine: the N x M x T x R tensor of
noisy curve observations with its missingness mask, the row and column factors, the horseshoe+ shrinkage state
and the retained posterior samples.

Created: 19/10/2026
"""

# imports
from dataclasses import dataclass, field
from typing import Iterable, Optional
import numpy as np
import numpy.typing as npt
import pandas as pd
from btf.model.errors import DataError

LONG_FORMAT_COLUMNS = ["row", "col", "dose", "replicate", "value"]


# modules
@dataclass
class ObservationTensor:
    """
    N x M x T x R array of real observations with a per-cell missingness mask

    Attributes
    ----------
    values: npt.NDArray[float]
        observed values, cells where the mask is false hold 0.0 and are never read
    mask: npt.NDArray[bool]
        true where the (i,j,t,r) cell was observed
    """

    values: npt.NDArray
    mask: npt.NDArray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 4 or self.values.shape != self.mask.shape:
            raise DataError(
                "values and mask must be 4-arrays of equal shape, got %s and %s"
                % (self.values.shape, self.mask.shape)
            )
        if not np.all(np.isfinite(self.values[self.mask])):
            raise DataError("observed values must be finite")
        self.values = np.where(self.mask, self.values, 0.0)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        N, M, T, R = self.values.shape
        return N, M, T, R

    @property
    def observed_cells(self) -> npt.NDArray:
        """(N,M,T) boolean array, true where at least one replicate was observed"""
        return self.mask.any(axis=3)

    @property
    def counts(self) -> npt.NDArray:
        """(N,M,T) number of observed replicates"""
        return self.mask.sum(axis=3)

    @property
    def sums(self) -> npt.NDArray:
        """(N,M,T) sum of observed replicate values"""
        return np.where(self.mask, self.values, 0.0).sum(axis=3)

    def check_coverage(self) -> None:
        """
        Every row i and column j must have at least one observed cell before fitting

        Raises
        ------
        DataError
            naming the first uncovered row or column
        """
        row_cover = self.mask.any(axis=(1, 2, 3))
        col_cover = self.mask.any(axis=(0, 2, 3))
        if not row_cover.all():
            raise DataError("row %d has no observed cells" % int(np.flatnonzero(~row_cover)[0]))
        if not col_cover.all():
            raise DataError("column %d has no observed cells" % int(np.flatnonzero(~col_cover)[0]))

    def with_mask(self, mask: npt.NDArray) -> "ObservationTensor":
        """Return a copy observing only the cells that are true in both masks"""
        return ObservationTensor(self.values.copy(), self.mask & np.asarray(mask, dtype=bool))

    def to_long_format(self) -> list[tuple[int, int, int, int, float]]:
        idx = np.argwhere(self.mask)
        return [
            (int(i), int(j), int(t), int(r), float(self.values[i, j, t, r]))
            for i, j, t, r in idx
        ]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.to_long_format(), columns=LONG_FORMAT_COLUMNS)


def tensor_from_long_format(
    rows: Iterable[tuple[int, int, int, int, float]],
    dims: Optional[tuple[int, int, int, int]] = None,
) -> ObservationTensor:
    """
    Build an observation tensor from (i, j, t, r, value) records

    Parameters
    ----------
    rows: Iterable[tuple]
        long-format records, missing cells are simply absent
    dims: tuple, optional
        force (N, M, T, R); by default each dimension is the largest index + 1

    Returns
    -------
    ObservationTensor
        tensor whose mask is true exactly at the listed keys

    Raises
    ------
    DataError
        on a negative index, a duplicate key or a non-finite value
    """
    records = list(rows)
    seen = set()
    for rec in records:
        key = tuple(int(v) for v in rec[:4])
        if min(key) < 0:
            raise DataError("negative index in key %s" % (key,))
        if key in seen:
            raise DataError("duplicate key %s" % (key,))
        if not np.isfinite(rec[4]):
            raise DataError("non-finite value at key %s" % (key,))
        seen.add(key)

    if dims is None:
        if not records:
            raise DataError("no observations given")
        keys = np.asarray([tuple(int(v) for v in rec[:4]) for rec in records])
        dims = tuple(int(v) for v in keys.max(axis=0) + 1)

    values = np.zeros(dims, dtype=float)
    mask = np.zeros(dims, dtype=bool)
    for i, j, t, r, value in records:
        values[int(i), int(j), int(t), int(r)] = float(value)
        mask[int(i), int(j), int(t), int(r)] = True
    return ObservationTensor(values, mask)


def read_long_csv(path: str, dims: Optional[tuple[int, int, int, int]] = None) -> ObservationTensor:
    """Load a `row,col,dose,replicate,value` CSV"""
    frame = pd.read_csv(path)
    missing = [c for c in LONG_FORMAT_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError("%s is missing columns %s" % (path, missing))
    rows = frame[LONG_FORMAT_COLUMNS].itertuples(index=False, name=None)
    return tensor_from_long_format(rows, dims=dims)


def write_long_csv(tensor: ObservationTensor, path: str) -> None:
    tensor.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass
class FactorState:
    """
    Row factors W (N x D) and functional column factors V (M x T x D)
    """

    W: npt.NDArray
    V: npt.NDArray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.W.ndim != 2 or self.V.ndim != 3 or self.W.shape[1] != self.V.shape[2]:
            raise DataError("inconsistent factor shapes W%s V%s" % (self.W.shape, self.V.shape))

    @property
    def D(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "FactorState":
        return FactorState(self.W.copy(), self.V.copy())

    def inner_products(self) -> npt.NDArray:
        """(N,M,T) array of <W_i, V_jt>"""
        return np.einsum("id,jtd->ijt", self.W, self.V)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.V)))


def inner_curve(state: FactorState, i: int, j: int) -> npt.NDArray:
    """
    Curve of inner products <W_i, V_jt> over the T grid points

    Raises
    ------
    IndexError
        when i or j is out of range
    """
    N, M = state.W.shape[0], state.V.shape[0]
    if not (0 <= i < N and 0 <= j < M):
        raise IndexError("index (%d, %d) out of range for %d rows and %d columns" % (i, j, N, M))
    return state.V[j] @ state.W[i]


@dataclass
class LocalShrinkage:
    """Horseshoe+ variables of one column: tau2, c, phi and eta, each of length L"""

    tau2: npt.NDArray
    c: npt.NDArray
    phi: npt.NDArray
    eta: npt.NDArray


@dataclass
class ShrinkageState:
    """
    Horseshoe+ local scales per (column j, difference row l) plus the global parameters

    Attributes
    ----------
    tau2: npt.NDArray[float]
        M x L local variances
    c, phi, eta: npt.NDArray[float]
        M x L inverse-gamma auxiliaries; phi holds the squared scale of the outer half-Cauchy
    rho2: float
        global shrinkage, fixed for a run
    sigma2: float
        row-prior variance
    """

    tau2: npt.NDArray
    c: npt.NDArray
    phi: npt.NDArray
    eta: npt.NDArray
    rho2: float
    sigma2: float

    @classmethod
    def initial(cls, M: int, L: int, rho2: float, sigma2: float = 1.0) -> "ShrinkageState":
        ones = np.ones((M, L))
        return cls(ones.copy(), ones.copy(), ones.copy(), ones.copy(), float(rho2), float(sigma2))

    def copy(self) -> "ShrinkageState":
        return ShrinkageState(
            self.tau2.copy(), self.c.copy(), self.phi.copy(), self.eta.copy(), self.rho2, self.sigma2
        )

    def column(self, j: int) -> LocalShrinkage:
        return LocalShrinkage(self.tau2[j].copy(), self.c[j].copy(), self.phi[j].copy(), self.eta[j].copy())

    def set_column(self, j: int, local: LocalShrinkage) -> None:
        self.tau2[j] = local.tau2
        self.c[j] = local.c
        self.phi[j] = local.phi
        self.eta[j] = local.eta

    def validate(self) -> None:
        for name in ("tau2", "c", "phi", "eta"):
            arr = getattr(self, name)
            if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
                raise DataError("shrinkage %s must be finite and strictly positive" % name)
        if not (self.rho2 > 0 and self.sigma2 > 0):
            raise DataError("rho2 and sigma2 must be strictly positive")


@dataclass
class PosteriorSamples:
    """
    Snapshots kept after burn-in, one per thinning stride

    Attributes
    ----------
    W: npt.NDArray
        S x N x D row factor snapshots
    V: npt.NDArray
        S x M x T x D column factor snapshots
    loglik: npt.NDArray
        S log-likelihood values, one per snapshot
    sigma2: npt.NDArray
        S row-prior variances
    nu2: npt.NDArray, optional
        S Gaussian noise variances, only for the Gaussian likelihood
    sweeps, burn_in, thin: int
        schedule that produced the snapshots
    """

    W: npt.NDArray
    V: npt.NDArray
    loglik: npt.NDArray
    sigma2: npt.NDArray
    sweeps: int
    burn_in: int
    thin: int
    nu2: Optional[npt.NDArray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = retained_count(self.sweeps, self.burn_in, self.thin)
        if not (len(self.W) == len(self.V) == len(self.loglik) == expected):
            raise DataError(
                "expected %d snapshots, got W=%d V=%d loglik=%d"
                % (expected, len(self.W), len(self.V), len(self.loglik))
            )

    def __len__(self) -> int:
        return len(self.loglik)

    def curve_samples(self) -> npt.NDArray:
        """S x N x M x T inner products per snapshot"""
        return np.einsum("sid,sjtd->sijt", self.W, self.V)

    def posterior_mean_curve(self) -> npt.NDArray:
        return self.curve_samples().mean(axis=0)


def retained_count(sweeps: int, burn_in: int, thin: int) -> int:
    return (sweeps - burn_in) // thin


def is_retained(sweep: int, burn_in: int, thin: int) -> bool:
    """Sweep indices start at 0; the last sweep of every stride after burn-in is kept"""
    return sweep >= burn_in and (sweep - burn_in + 1) % thin == 0
