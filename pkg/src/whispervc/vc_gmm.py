"""Joint-density GMM conversion with maximum-likelihood trajectory generation.

Source and target cepstra (c1 and above, c0 is carried over from the source)
are stacked with their deltas into joint vectors and modelled by a full
covariance Gaussian mixture trained with EM. Conversion picks the most likely
mixture per frame from the source half, conditions the target half on the
source, solves for the smoothest static trajectory consistent with the
predicted statics and deltas, and finally rescales per-dimension variance
towards the global variance seen in training.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve, solve_triangular, solveh_banded
from scipy.special import logsumexp
from sklearn.cluster import KMeans

from .alignment import AlignedPairSet
from .spectral import AnalysisConfig, Cepstrogram

log = logging.getLogger(__name__)

GMM_MAGIC = b"GMMV"
GMM_VERSION = 1
COV_FLOOR = 1e-6
GV_EXPONENT = 1.0
GV_BLEND = 0.8


class GmmError(ValueError):
    pass


def delta(x: np.ndarray) -> np.ndarray:
    """0.5 * (x[t+1] - x[t-1]); one-sided differences at the ends, zero for T=1."""
    x = np.asarray(x, dtype=np.float64)
    d = np.zeros_like(x)
    if x.shape[0] < 2:
        return d
    d[1:-1] = 0.5 * (x[2:] - x[:-2])
    d[0] = x[1] - x[0]
    d[-1] = x[-1] - x[-2]
    return d


def delta_matrix(T: int) -> sparse.csr_matrix:
    """Sparse T x T matrix with ``delta_matrix(T) @ x == delta(x)``."""
    if T < 2:
        return sparse.csr_matrix((T, T))
    m = sparse.lil_matrix((T, T))
    m[0, 0], m[0, 1] = -1.0, 1.0
    m[T - 1, T - 2], m[T - 1, T - 1] = -1.0, 1.0
    for t in range(1, T - 1):
        m[t, t - 1], m[t, t + 1] = -0.5, 0.5
    return m.tocsr()


def with_deltas(statics: np.ndarray) -> np.ndarray:
    return np.hstack([statics, delta(statics)])


@dataclass
class JointFeatureSet:
    """Rows are [src static, src delta, tgt static, tgt delta]."""

    rows: np.ndarray
    static_dim: int
    utt_index: np.ndarray
    utterances: list
    target_statics: list = field(default_factory=list, repr=False)

    def __len__(self):
        return self.rows.shape[0]


def _sequence(indices: np.ndarray, frames: np.ndarray):
    """Rebuild the contiguous original sequence from path-ordered frames, or None."""
    lo = indices.min()
    n = indices.max() - lo + 1
    seq = np.full((n, frames.shape[1]), np.nan)
    seq[indices - lo] = frames
    if np.isnan(seq).any():
        return None, lo
    return seq, lo


def build_joint_vectors(pairs: AlignedPairSet) -> JointFeatureSet:
    """Deltas are taken on each utterance's original frame order, never across utterances."""
    order = pairs.order
    rows, utt_index, utterances, tgt_seqs = [], [], [], []
    for uid, sl in pairs.segments():
        src_idx, tgt_idx = pairs.src_index[sl], pairs.tgt_index[sl]
        src_seq, s0 = _sequence(src_idx, pairs.source[sl, 1:])
        tgt_seq, t0 = _sequence(tgt_idx, pairs.target[sl, 1:])
        if src_seq is None or tgt_seq is None:
            log.warning("utterance %s has non-contiguous provenance; skipped", uid)
            continue
        if src_seq.shape[0] < 2 or tgt_seq.shape[0] < 2:
            log.warning("utterance %s has a single frame; skipped", uid)
            continue
        src = with_deltas(src_seq)[src_idx - s0]
        tgt = with_deltas(tgt_seq)[tgt_idx - t0]
        rows.append(np.hstack([src, tgt]))
        utt_index.append(np.full(src.shape[0], len(utterances)))
        utterances.append(uid)
        tgt_seqs.append(tgt_seq)
    if not rows:
        raise GmmError("no usable utterances")
    return JointFeatureSet(np.vstack(rows), order - 1, np.concatenate(utt_index), utterances, tgt_seqs)


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    gv_mean: np.ndarray
    static_dim: int
    config: AnalysisConfig = field(default_factory=AnalysisConfig)
    trained_on: dict = field(default_factory=dict)
    log_likelihoods: list = field(default_factory=list, repr=False)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def half(self) -> int:
        """Size of the source (= target) half: statics plus deltas."""
        return 2 * self.static_dim


def _component_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    z = solve_triangular(chol, (x - mean).T, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (np.sum(z * z, axis=0) + logdet + x.shape[1] * np.log(2.0 * np.pi))


def _floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def _log_resp(x, weights, means, chols):
    logp = np.empty((x.shape[0], weights.size))
    for k in range(weights.size):
        logp[:, k] = np.log(weights[k]) + _component_logpdf(x, means[k], chols[k])
    norm = logsumexp(logp, axis=1)
    return logp - norm[:, None], norm


def _m_step(x, resp, floor, prev_means, prev_covs):
    nk = resp.sum(axis=0)
    K, dim = resp.shape[1], x.shape[1]
    means = prev_means.copy()
    covs = prev_covs.copy()
    for k in range(K):
        if nk[k] < 1e-10:
            continue
        means[k] = resp[:, k] @ x / nk[k]
        xc = x - means[k]
        covs[k] = _floor_covariance((resp[:, k, None] * xc).T @ xc / nk[k], floor)
    weights = nk / nk.sum()
    return np.maximum(weights, 1e-300), means, covs


def train_gmm(
    data: JointFeatureSet,
    K: int = 64,
    tol: float = 1e-3,
    max_iter: int = 200,
    seed: int = 0,
    n_init: int = 10,
    config: AnalysisConfig = AnalysisConfig(),
    trained_on: dict | None = None,
    min_iter: int = 0,
) -> GmmModel:
    """EM for a full-covariance GMM, initialised from the best of ``n_init`` k-means++ runs.

    Stops once the relative improvement of the mean log-likelihood drops
    below ``tol`` (after at least ``min_iter`` iterations) or at ``max_iter``.
    """
    x = np.asarray(data.rows, dtype=np.float64)
    n, dim = x.shape
    if K < 1 or tol <= 0:
        raise GmmError("K must be >= 1 and tol > 0")
    if n < 10 * K:
        raise GmmError(f"need at least {10 * K} frames for {K} mixtures, got {n}")
    floor = COV_FLOOR * float(np.mean(np.var(x, axis=0)))
    floor = max(floor, 1e-12)

    if K == 1:
        labels = np.zeros(n, dtype=int)
    else:
        labels = KMeans(n_clusters=K, init="k-means++", n_init=n_init, random_state=seed).fit(x).labels_
    resp = np.zeros((n, K))
    resp[np.arange(n), labels] = 1.0
    weights, means, covs = _m_step(x, resp, floor, np.zeros((K, dim)), np.tile(np.eye(dim), (K, 1, 1)))

    history = []
    for it in range(max_iter):
        chols = np.stack([np.linalg.cholesky(c) for c in covs])
        log_resp, norm = _log_resp(x, weights, means, chols)
        ll = float(np.mean(norm))
        history.append(ll)
        if len(history) > 1:
            gain = (history[-1] - history[-2]) / abs(history[-2])
            log.debug("EM iter %d: mean log-likelihood %.6f (rel gain %.2e)", it, ll, gain)
            if gain < tol and it >= min_iter:
                break
        weights, means, covs = _m_step(x, np.exp(log_resp), floor, means, covs)

    gv = np.mean([np.var(seq, axis=0) for seq in data.target_statics], axis=0) if data.target_statics else np.ones(data.static_dim)
    return GmmModel(weights, means, covs, gv, data.static_dim, config, dict(trained_on or {}), history)


def posteriors(model: GmmModel, rows: np.ndarray) -> np.ndarray:
    """Mixture responsibilities (N, K) for full joint rows."""
    chols = np.stack([np.linalg.cholesky(c) for c in model.covariances])
    log_resp, _ = _log_resp(np.asarray(rows, dtype=np.float64), model.weights, model.means, chols)
    return np.exp(log_resp)


@dataclass
class MlpgProblem:
    """Per-frame target predictions for MLPG.

    ``static_mean``/``delta_mean`` are (T, D); ``precision`` is (T, D, 2, 2),
    the inverse of each dimension's (static, delta) conditional covariance block.
    """

    static_mean: np.ndarray
    delta_mean: np.ndarray
    precision: np.ndarray

    @classmethod
    def from_covariance(cls, static_mean, delta_mean, cov_blocks) -> "MlpgProblem":
        return cls(np.asarray(static_mean), np.asarray(delta_mean), np.linalg.inv(cov_blocks))


def mlpg(problem: MlpgProblem) -> np.ndarray:
    """Solve W'PW y = W'P m per dimension with a pentadiagonal Cholesky solve."""
    ms, md, prec = problem.static_mean, problem.delta_mean, problem.precision
    T, D = ms.shape
    if T == 1:
        return ms.copy()
    W = delta_matrix(T)
    out = np.empty((T, D))
    for d in range(D):
        pss, psd, pdd = prec[:, d, 0, 0], 0.5 * (prec[:, d, 0, 1] + prec[:, d, 1, 0]), prec[:, d, 1, 1]
        A = sparse.diags(pss) + W.T @ sparse.diags(pdd) @ W + sparse.diags(psd) @ W + W.T @ sparse.diags(psd)
        b = pss * ms[:, d] + psd * md[:, d] + W.T @ (psd * ms[:, d] + pdd * md[:, d])
        A = A.todia()
        ab = np.zeros((3, T))
        for k in range(3):
            ab[2 - k, k:] = A.diagonal(k)
        out[:, d] = solveh_banded(ab, b, check_finite=False)
    return out


@dataclass
class _Regression:
    logw: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    chol_xx: np.ndarray
    gain: np.ndarray
    cond_cov: np.ndarray


def _regression(model: GmmModel) -> _Regression:
    h = model.half
    mx, my = model.means[:, :h], model.means[:, h:]
    chol_xx, gain, cond = [], [], []
    for cov in model.covariances:
        sxx, sxy, syx, syy = cov[:h, :h], cov[:h, h:], cov[h:, :h], cov[h:, h:]
        cf = cho_factor(sxx, lower=True)
        g = cho_solve(cf, sxy).T  # Syx Sxx^-1
        chol_xx.append(np.tril(cf[0]))
        gain.append(g)
        cond.append(syy - g @ sxy)
    return _Regression(np.log(model.weights), mx, my, np.stack(chol_xx), np.stack(gain), np.stack(cond))


def select_components(model: GmmModel, x: np.ndarray, reg: _Regression | None = None) -> np.ndarray:
    """Index of the most probable mixture per frame given the source half."""
    reg = reg or _regression(model)
    logp = np.stack([reg.logw[k] + _component_logpdf(x, reg.mx[k], reg.chol_xx[k]) for k in range(model.n_components)], axis=1)
    return np.argmax(logp, axis=1)


def conditional_problem(model: GmmModel, src_statics: np.ndarray) -> MlpgProblem:
    reg = _regression(model)
    D = model.static_dim
    x = with_deltas(src_statics)
    comp = select_components(model, x, reg)
    mean = np.empty((x.shape[0], 2 * D))
    for k in np.unique(comp):
        sel = comp == k
        mean[sel] = reg.my[k] + (x[sel] - reg.mx[k]) @ reg.gain[k].T
    idx = np.arange(D)
    blocks = np.empty((x.shape[0], D, 2, 2))
    cov = reg.cond_cov[comp]
    blocks[:, :, 0, 0] = cov[:, idx, idx]
    blocks[:, :, 0, 1] = cov[:, idx, idx + D]
    blocks[:, :, 1, 0] = cov[:, idx + D, idx]
    blocks[:, :, 1, 1] = cov[:, idx + D, idx + D]
    return MlpgProblem.from_covariance(mean[:, :D], mean[:, D:], blocks)


def apply_gv(y: np.ndarray, gv_mean: np.ndarray, exponent: float = GV_EXPONENT, blend: float = GV_BLEND) -> np.ndarray:
    """Scale each dimension about its mean so its variance moves toward ``gv_mean``."""
    mu = y.mean(axis=0)
    var = y.var(axis=0)
    ok = var > 0
    scale = np.ones_like(var)
    scale[ok] = (gv_mean[ok] / var[ok]) ** (0.5 * exponent * blend)
    return mu + (y - mu) * scale


def convert_gmm(model: GmmModel, src: Cepstrogram, use_gv: bool = True) -> Cepstrogram:
    if not isinstance(model, GmmModel) or model.means.shape[1] != 4 * model.static_dim:
        raise GmmError("invalid GMM model")
    if src.frames.shape[1] != model.static_dim + 1:
        raise GmmError(f"model expects order {model.static_dim + 1}, got {src.frames.shape[1]}")
    if src.num_frames == 0:
        return Cepstrogram(src.frames.copy(), src.config)
    y = mlpg(conditional_problem(model, src.frames[:, 1:]))
    if use_gv and src.num_frames > 1:
        y = apply_gv(y, model.gv_mean)
    return Cepstrogram(np.hstack([src.frames[:, :1], y]), src.config)


def save_gmm(model: GmmModel, path) -> None:
    K, dim = model.means.shape
    meta = json.dumps(
        {"config": asdict(model.config), "trained_on": model.trained_on, "static_dim": model.static_dim}, sort_keys=True
    ).encode()
    chols = np.stack([np.linalg.cholesky(c) for c in model.covariances])
    with open(path, "wb") as fh:
        fh.write(GMM_MAGIC + struct.pack("<3I", GMM_VERSION, K, dim))
        for arr in (model.weights, model.means, chols, model.gv_mean):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)


def load_gmm(path) -> GmmModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != GMM_MAGIC:
        raise GmmError(f"{path}: not a GMM model file")
    version, K, dim = struct.unpack("<3I", raw[4:16])
    if version != GMM_VERSION:
        raise GmmError(f"{path}: unsupported GMM model version {version}")
    pos = 16

    def take(count):
        nonlocal pos
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).copy()
        pos += 8 * count
        return arr

    weights = take(K)
    means = take(K * dim).reshape(K, dim)
    chols = take(K * dim * dim).reshape(K, dim, dim)
    gv = take(dim // 4)
    (meta_len,) = struct.unpack("<I", raw[pos : pos + 4])
    meta = json.loads(raw[pos + 4 : pos + 4 + meta_len])
    covs = chols @ np.transpose(chols, (0, 2, 1))
    return GmmModel(weights, means, covs, gv, meta["static_dim"], AnalysisConfig(**meta["config"]), meta["trained_on"])
