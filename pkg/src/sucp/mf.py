"""Static and temporal matrix factorization trained by SGD on observed entries.

Objective::

    sum_{(u,l) observed} (r_ul - U_u . L_l)^2 + lam * (||U||^2 + ||L||^2)

``U`` is stored ``(m, K)`` and ``L`` is ``(n, K)``.
"""
from __future__ import annotations

import ast
import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .data import CheckInLog, InteractionMatrix
from .geo import GeoConfig, assign_states

log = logging.getLogger(__name__)


class MFDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class MFConfig:
    k: int = 30
    learning_rate: float = 0.005
    reg_lambda: float = 0.02
    epochs: int = 50
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.k < 1 or self.epochs < 1:
            raise ValueError("k and epochs must be >= 1")
        if self.learning_rate <= 0 or self.reg_lambda < 0 or self.init_scale <= 0:
            raise ValueError("learning_rate and init_scale must be positive, reg_lambda >= 0")

    def digest(self) -> str:
        return hashlib.sha256(repr(sorted(asdict(self).items())).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class FactorModel:
    U: np.ndarray
    L: np.ndarray
    config: MFConfig
    losses: tuple = field(default=())

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @property
    def epochs_run(self) -> int:
        return len(self.losses) - 1

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def predict(self, u: int, l: int) -> float:
        return float(self.U[u] @ self.L[l])

    def predict_rows(self, users) -> np.ndarray:
        return self.U[np.asarray(users)] @ self.L.T


@numba.njit(cache=True)
def _sgd_epoch(rows, cols, vals, order, U, L, lr, lam):
    k = U.shape[1]
    for t in range(order.shape[0]):
        i = order[t]
        u = rows[i]
        l = cols[i]
        pred = 0.0
        for f in range(k):
            pred += U[u, f] * L[l, f]
        err = vals[i] - pred
        for f in range(k):
            uf = U[u, f]
            lf = L[l, f]
            U[u, f] = uf + lr * (err * lf - lam * uf)
            L[l, f] = lf + lr * (err * uf - lam * lf)


def _coo(M) -> sp.coo_matrix:
    csr = M.csr if isinstance(M, InteractionMatrix) else sp.csr_matrix(M)
    return csr.tocoo()


def mf_objective(M, U: np.ndarray, L: np.ndarray, reg_lambda: float) -> float:
    c = _coo(M)
    pred = np.einsum("ij,ij->i", U[c.row], L[c.col])
    return float(((c.data - pred) ** 2).sum() + reg_lambda * ((U ** 2).sum() + (L ** 2).sum()))


def mf_gradient(M, U: np.ndarray, L: np.ndarray, reg_lambda: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of the objective with respect to ``U`` and ``L``."""
    c = _coo(M)
    err = c.data - np.einsum("ij,ij->i", U[c.row], L[c.col])
    E = sp.csr_matrix((err, (c.row, c.col)), shape=(U.shape[0], L.shape[0]))
    gU = -2.0 * (E @ L) + 2.0 * reg_lambda * U
    gL = -2.0 * (E.T @ U) + 2.0 * reg_lambda * L
    return np.asarray(gU), np.asarray(gL)


def train_mf(M, cfg: MFConfig = MFConfig(), name: str = "static") -> FactorModel:
    """Fit factors by SGD over observed entries in a seeded shuffled order.

    Each step applies ``U_u += lr * (e * L_l - lam * U_u)`` (and symmetrically
    for ``L_l``); the factor 2 of the squared-error gradient is folded into
    ``lr``.  ``losses`` holds the objective before training and after each epoch.
    """
    c = _coo(M)
    if c.nnz == 0:
        raise ValueError(f"matrix for {name!r} has no entries")
    m, n = c.shape
    rng = np.random.default_rng(cfg.seed)
    U = rng.uniform(0.0, cfg.init_scale, size=(m, cfg.k))
    L = rng.uniform(0.0, cfg.init_scale, size=(n, cfg.k))
    rows = c.row.astype(np.int64)
    cols = c.col.astype(np.int64)
    vals = c.data.astype(np.float64)
    losses = [mf_objective(c, U, L, cfg.reg_lambda)]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(vals)).astype(np.int64)
        _sgd_epoch(rows, cols, vals, order, U, L, cfg.learning_rate, cfg.reg_lambda)
        loss = mf_objective(c, U, L, cfg.reg_lambda)
        if not np.isfinite(loss) or not (np.isfinite(U).all() and np.isfinite(L).all()):
            raise MFDivergenceError(f"MF {name!r} diverged at epoch {epoch + 1} (loss={loss})")
        losses.append(loss)
    log.debug("MF %s: loss %.4g -> %.4g", name, losses[0], losses[-1])
    return FactorModel(U, L, cfg, tuple(losses))


@dataclass(frozen=True, eq=False)
class TemporalSlices:
    states: tuple
    matrices: tuple


def split_temporal(train: CheckInLog, states_cfg: GeoConfig) -> TemporalSlices:
    sid = assign_states(train.timestamps, states_cfg)
    mats = []
    for s in range(len(states_cfg.states)):
        sel = sid == s
        csr = sp.csr_matrix((np.ones(sel.sum()), (train.users[sel], train.pois[sel])), shape=(train.m, train.n))
        csr.sum_duplicates()
        mats.append(InteractionMatrix(csr))
    return TemporalSlices(tuple(s.name for s in states_cfg.states), tuple(mats))


@dataclass(frozen=True, eq=False)
class PreferenceMatrix:
    """Summed temporal predictions, clamped at zero; rows computed on demand."""

    models: tuple

    def __post_init__(self):
        if not self.models:
            raise ValueError("need at least one temporal model")
        shapes = {(mo.U.shape[0], mo.L.shape[0]) for mo in self.models}
        if len(shapes) != 1:
            raise ValueError(f"temporal models disagree in shape: {shapes}")

    @property
    def shape(self) -> tuple:
        mo = self.models[0]
        return mo.U.shape[0], mo.L.shape[0]

    def rows(self, users) -> np.ndarray:
        out = sum(mo.predict_rows(users) for mo in self.models)
        return np.maximum(out, 0.0)

    def dense(self) -> np.ndarray:
        return self.rows(np.arange(self.shape[0]))

    def __getitem__(self, ul) -> float:
        u, l = ul
        return max(0.0, sum(mo.predict(u, l) for mo in self.models))


def train_temporal(slices: TemporalSlices, cfg: MFConfig = MFConfig()) -> list:
    """One model per nonempty slice; empty slices contribute nothing."""
    models = []
    for name, H in zip(slices.states, slices.matrices):
        if H.nnz == 0:
            log.warning("temporal slice %r is empty; skipped", name)
            continue
        models.append(train_mf(H, cfg, name=name))
    return models


def aggregate_temporal(models) -> PreferenceMatrix:
    return PreferenceMatrix(tuple(models))


def preference_score(u: int, l: int, static: FactorModel, rhat: PreferenceMatrix) -> float:
    return rhat[u, l] * max(static.predict(u, l), 0.0)


def preference_block(users, static: FactorModel, rhat: PreferenceMatrix) -> np.ndarray:
    return rhat.rows(users) * np.maximum(static.predict_rows(users), 0.0)


def save_factors(path: str, model: FactorModel) -> None:
    """Write a model as ``.npz`` with a header of K, m, n, seed and config hash."""
    m, n = model.U.shape[0], model.L.shape[0]
    header = f"K={model.k} m={m} n={n} seed={model.config.seed} config={model.config.digest()}"
    with open(path, "wb") as fh:
        np.savez(fh, U=model.U, L=model.L, losses=np.array(model.losses), header=np.array(header),
                 config=np.array(repr(asdict(model.config))))


def load_factors(path: str) -> FactorModel:
    with np.load(path) as z:
        cfg = MFConfig(**ast.literal_eval(str(z["config"])))
        return FactorModel(z["U"], z["L"], cfg, tuple(z["losses"].tolist()))
