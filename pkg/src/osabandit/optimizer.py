"""Least-squares fit of Theta to the empirical sensing-outcome distribution.

The fitted point is any Theta whose implied outcome distribution is within
``1/t`` (Euclidean) of the best fit found, i.e. a member of the candidate set
used by the candidate-set access rule. The best fit is approximated by a
multi-start projected Levenberg-Marquardt search on the squared distance.

Gauss-Newton normal matrices have a closed form because the outcome
distribution factorizes over channels; only the data term needs the table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .model import encode_outcomes, outcome_matrix, outcome_probs, sensed_free_prob

THETA_FLOOR = 1e-6
DENSE_MAX_CHANNELS = 16
_F_EPS = 1e-12


class OutcomeTable:
    """Occurrence counts of full sensing-outcome vectors.

    Dense (``2**n`` counts) for up to 16 channels, sparse beyond.
    """

    def __init__(self, n_channels: int):
        self.n_channels = n_channels
        self.total_slots = 0
        self.dense = n_channels <= DENSE_MAX_CHANNELS
        self._counts = np.zeros(1 << n_channels, dtype=np.int64) if self.dense else {}

    @classmethod
    def from_outcomes(cls, outcomes) -> "OutcomeTable":
        outcomes = np.atleast_2d(np.asarray(outcomes))
        table = cls(outcomes.shape[1])
        table.add_codes(encode_outcomes(outcomes))
        return table

    @classmethod
    def from_rates(cls, rates, total_slots: int) -> "OutcomeTable":
        """Table whose rates are exactly ``rates`` (dense tables only; rates need not be count-valued)."""
        rates = np.asarray(rates, dtype=float)
        n = int(np.log2(rates.size))
        if rates.size != 1 << n:
            raise ValueError("rates must have length 2**n")
        table = cls(n)
        table._rates = rates
        table.total_slots = int(total_slots)
        return table

    def add(self, x) -> None:
        self.add_codes(encode_outcomes(np.atleast_2d(x)))

    def add_codes(self, codes) -> None:
        codes = np.asarray(codes, dtype=np.int64).reshape(-1)
        if self.dense:
            np.add.at(self._counts, codes, 1)
        else:
            for c in codes.tolist():
                self._counts[c] = self._counts.get(c, 0) + 1
        self.total_slots += codes.size
        self.__dict__.pop("_rates", None)

    @property
    def counts(self):
        return self._counts

    def rates(self) -> np.ndarray:
        """Dense vector of L_u."""
        if "_rates" in self.__dict__:
            return self._rates
        if not self.dense:
            raise ValueError("dense rates are not materialized above 16 channels")
        return self._counts / max(self.total_slots, 1)

    def observed(self):
        """Observed outcome codes and their rates."""
        if "_rates" in self.__dict__ or self.dense:
            rates = self.rates()
            codes = np.flatnonzero(rates)
            return codes, rates[codes]
        codes = np.array(sorted(self._counts), dtype=np.int64)
        counts = np.array([self._counts[c] for c in codes.tolist()], dtype=float)
        return codes, counts / self.total_slots

    def sensed_free_rates(self) -> np.ndarray:
        """Per-channel marginal rate of being sensed free."""
        codes, rates = self.observed()
        bits = (codes[:, None] >> np.arange(self.n_channels)) & 1
        return rates @ bits


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    objective: float
    best_objective_found: float
    in_candidate_set: bool
    slot: int


def _clipped_f(theta, p_d, p_f):
    return np.clip(sensed_free_prob(theta, p_d, p_f), _F_EPS, 1.0 - _F_EPS)


def _gn_matrix(f, d):
    """J^T J for the outcome-probability Jacobian, in closed form."""
    s = f**2 + (1.0 - f) ** 2
    total = np.prod(s, axis=-1, keepdims=True)
    e = (2.0 * f - 1.0) * d
    g = total[..., None] / (s[..., :, None] * s[..., None, :]) * e[..., :, None] * e[..., None, :]
    n = f.shape[-1]
    diag = 2.0 * total / s * d**2
    g[..., np.arange(n), np.arange(n)] = diag
    return g


def _dense_terms(theta, rates, U, p_d, p_f):
    """Squared objective, J^T r and J^T J for dense rate vectors (batched over leading axes)."""
    d = p_d - p_f
    f = _clipped_f(theta, p_d, p_f)
    P = outcome_probs(f)
    r = P - rates
    sq = np.einsum("...u,...u->...", r, r)
    a = r * P
    jtr = d * ((a @ U) / f - (a @ (1.0 - U)) / (1.0 - f))
    return sq, jtr, _gn_matrix(f, d)


def _dense_sq(theta, rates, p_d, p_f):
    r = outcome_probs(_clipped_f(theta, p_d, p_f)) - rates
    return np.einsum("...u,...u->...", r, r)


def _sparse_parts(theta, codes, rates, p_d, p_f):
    f = _clipped_f(theta, p_d, p_f)
    bits = ((codes[:, None] >> np.arange(theta.shape[-1])) & 1).astype(float)
    p_obs = np.prod(np.where(bits == 1, f, 1.0 - f), axis=-1)
    s = f**2 + (1.0 - f) ** 2
    total = np.prod(s)
    sq = total - 2.0 * p_obs @ rates + rates @ rates
    return f, bits, p_obs, s, total, max(sq, 0.0)


def _sparse_terms(theta, codes, rates, p_d, p_f):
    d = p_d - p_f
    f, bits, p_obs, s, total, sq = _sparse_parts(theta, codes, rates, p_d, p_f)
    jtp = d * (2.0 * f - 1.0) * total / s
    a = rates * p_obs
    jtl = d * ((a @ bits) / f - (a @ (1.0 - bits)) / (1.0 - f))
    return sq, jtp - jtl, _gn_matrix(f, d)


def _sparse_sq(theta, codes, rates, p_d, p_f):
    return _sparse_parts(theta, codes, rates, p_d, p_f)[-1]


def squared_objective_and_grad(theta, table: OutcomeTable, p_d, p_f):
    """Squared distance to the empirical table and its gradient in Theta."""
    theta = np.asarray(theta, dtype=float)
    _check_dims(theta, table)
    if table.dense or "_rates" in table.__dict__:
        sq, jtr, _ = _dense_terms(theta, table.rates(), outcome_matrix(table.n_channels), p_d, p_f)
    else:
        codes, rates = table.observed()
        sq, jtr, _ = _sparse_terms(theta, codes, rates, p_d, p_f)
    return float(sq), 2.0 * jtr


def objective(theta, table: OutcomeTable, p_d, p_f) -> float:
    """Euclidean distance between the outcome distribution implied by ``theta`` and the table rates."""
    theta = np.asarray(theta, dtype=float)
    _check_dims(theta, table)
    if table.dense or "_rates" in table.__dict__:
        return float(np.sqrt(_dense_sq(theta, table.rates(), p_d, p_f)))
    codes, rates = table.observed()
    return float(np.sqrt(_sparse_sq(theta, codes, rates, p_d, p_f)))


def _check_dims(theta, table):
    if theta.shape[-1] != table.n_channels:
        raise ValueError(f"theta has {theta.shape[-1]} channels, table has {table.n_channels}")


def local_search(theta0, rates, p_d, p_f, max_iter: int = 500, gtol: float = 1e-9,
                 floor: float = THETA_FLOOR, lam0: float = 1e-3):
    """Projected Levenberg-Marquardt on the squared objective, batched over rows of ``theta0``.

    ``rates`` is a dense rate vector, shared or one per row. Only strictly
    improving steps are accepted, so each row ends at its best iterate.
    Returns ``(theta, squared objective)``.
    """
    theta = np.clip(np.array(theta0, dtype=float, ndmin=2), floor, 1.0)
    b, n = theta.shape
    rates = np.broadcast_to(rates, (b, 1 << n))
    U = outcome_matrix(n).astype(float)
    p_d = np.broadcast_to(np.asarray(p_d, dtype=float), (n,))
    p_f = np.broadcast_to(np.asarray(p_f, dtype=float), (n,))
    lam = np.full(b, lam0)
    active_rows = np.arange(b)
    sq = _dense_sq(theta, rates, p_d, p_f)
    eye = np.eye(n)
    for _ in range(max_iter):
        if active_rows.size == 0:
            break
        th = theta[active_rows]
        cur_sq, jtr, G = _dense_terms(th, rates[active_rows], U, p_d, p_f)
        grad = 2.0 * jtr
        pg = th - np.clip(th - grad, floor, 1.0)
        keep = np.linalg.norm(pg, axis=1) > gtol
        keep &= lam[active_rows] < 1e20
        active_rows, th, cur_sq, jtr, G = active_rows[keep], th[keep], cur_sq[keep], jtr[keep], G[keep]
        if active_rows.size == 0:
            break
        bound = ((th <= floor) & (jtr > 0)) | ((th >= 1.0) & (jtr < 0))
        free = ~bound
        A = G * (free[:, :, None] & free[:, None, :])
        A = A + lam[active_rows, None, None] * (np.diagonal(G, axis1=1, axis2=2)[:, None, :] * eye + 1e-12 * eye)
        A[:, np.arange(n), np.arange(n)] = np.where(free, A[:, np.arange(n), np.arange(n)], 1.0)
        step = np.linalg.solve(A, -np.where(free, jtr, 0.0)[..., None])[..., 0]
        cand = np.clip(th + step, floor, 1.0)
        cand_sq = _dense_sq(cand, rates[active_rows], p_d, p_f)
        better = cand_sq < cur_sq
        rows = active_rows[better]
        theta[rows] = cand[better]
        sq[rows] = cand_sq[better]
        lam[rows] = np.maximum(lam[rows] / 3.0, 1e-12)
        worse = active_rows[~better]
        lam[worse] *= 4.0
        # a rejected step with no room left means the row has converged
        stalled = ~better & (np.abs(cand - th).max(axis=1) < 1e-15)
        active_rows = active_rows[~stalled]
    return theta, sq


def warm_step(theta, rates, p_d, p_f, floor: float = THETA_FLOOR, lam: float = 1e-6):
    """One damped Gauss-Newton step per row, kept only where it lowers the objective.

    Cheap tracking of a slowly moving optimum. Returns ``(theta, squared objective)``.
    """
    n = theta.shape[-1]
    U = outcome_matrix(n).astype(float)
    sq, jtr, G = _dense_terms(theta, rates, U, p_d, p_f)
    free = ~(((theta <= floor) & (jtr > 0)) | ((theta >= 1.0) & (jtr < 0)))
    eye = np.eye(n)
    A = G * (free[:, :, None] & free[:, None, :])
    A = A + lam * np.diagonal(G, axis1=1, axis2=2)[:, None, :] * eye + 1e-12 * eye
    A[:, np.arange(n), np.arange(n)] = np.where(free, A[:, np.arange(n), np.arange(n)], 1.0)
    step = np.linalg.solve(A, -np.where(free, jtr, 0.0)[..., None])[..., 0]
    cand = np.clip(theta + step, floor, 1.0)
    cand_sq = _dense_sq(cand, rates, p_d, p_f)
    better = cand_sq < sq
    return np.where(better[:, None], cand, theta), np.where(better, cand_sq, sq)


def _sparse_local_search(theta0, codes, rates, p_d, p_f, max_iter, gtol, floor, lam0=1e-3):
    """Single-start variant of :func:`local_search` for sparse tables."""
    theta = np.clip(np.asarray(theta0, dtype=float), floor, 1.0)
    n = theta.size
    lam = lam0
    sq = _sparse_sq(theta, codes, rates, p_d, p_f)
    eye = np.eye(n)
    for _ in range(max_iter):
        sq, jtr, G = _sparse_terms(theta, codes, rates, p_d, p_f)
        if np.linalg.norm(theta - np.clip(theta - 2.0 * jtr, floor, 1.0)) <= gtol or lam > 1e20:
            break
        free = ~(((theta <= floor) & (jtr > 0)) | ((theta >= 1.0) & (jtr < 0)))
        A = G * np.outer(free, free) + lam * (np.diag(np.diag(G)) + 1e-12 * eye)
        A[~free, ~free] = 1.0
        cand = np.clip(theta + np.linalg.solve(A, -np.where(free, jtr, 0.0)), floor, 1.0)
        cand_sq = _sparse_sq(cand, codes, rates, p_d, p_f)
        if cand_sq < sq:
            theta, sq, lam = cand, cand_sq, max(lam / 3.0, 1e-12)
        else:
            if np.abs(cand - theta).max() < 1e-15:
                break
            lam *= 4.0
    return theta, sq


def moment_start(sensed_free_rates, p_d, p_f, floor: float = THETA_FLOOR) -> np.ndarray:
    """Invert the sensed-free rate per channel, clamped into the search box."""
    return np.clip((np.asarray(sensed_free_rates) + p_d - 1.0) / (p_d - p_f), floor, 1.0)


def start_points(moment: np.ndarray, starts: int, floor: float = THETA_FLOOR) -> np.ndarray:
    """Moment start followed by ``starts - 1`` Halton points (the all-zero point skipped)."""
    n = moment.shape[-1]
    halton = qmc.Halton(d=n, scramble=False)
    halton.fast_forward(1)
    pts = np.clip(halton.random(max(starts - 1, 0)), floor, 1.0)
    return np.vstack([moment[None, :], pts])


def fit_theta(table: OutcomeTable, p_d, p_f, slot: int | None = None, starts: int = 8,
              max_iter: int = 500, gtol: float = 1e-9, floor: float = THETA_FLOOR) -> FitResult:
    """Pick a Theta in the candidate set for the current outcome table.

    Multi-start local search; the lowest objective wins, earliest start on ties.
    """
    n = table.n_channels
    t = table.total_slots if slot is None else slot
    if t < 1:
        raise ValueError("need at least one observed slot")
    p_d = np.broadcast_to(np.asarray(p_d, dtype=float), (n,))
    p_f = np.broadcast_to(np.asarray(p_f, dtype=float), (n,))
    x0 = start_points(moment_start(table.sensed_free_rates(), p_d, p_f, floor), starts, floor)
    if table.dense or "_rates" in table.__dict__:
        thetas, sqs = local_search(x0, table.rates(), p_d, p_f, max_iter, gtol, floor)
    else:
        codes, rates = table.observed()
        found = [_sparse_local_search(x, codes, rates, p_d, p_f, max_iter, gtol, floor) for x in x0]
        thetas = np.array([th for th, _ in found])
        sqs = np.array([sq for _, sq in found])
    best = int(np.argmin(sqs))
    best_obj = float(np.sqrt(sqs[best]))
    theta_hat = thetas[best]
    obj = objective(theta_hat, table, p_d, p_f)
    return FitResult(theta_hat, obj, min(best_obj, obj), obj <= min(best_obj, obj) + 1.0 / t, t)
