"""Principal eigenvector estimators for spiked covariance data.

Three estimators share one interface.  Ordinary PCA (``opca``) takes the
top eigenvectors of the sample covariance.  Single-stage coordinate
selection (``spca``) keeps coordinates whose diagonal variance clears a
threshold before the eigendecomposition.  The two-stage augmented variant
(``aspca``) adds a second selection pass that scores the discarded
coordinates by their covariance with the stage-one eigenbasis, then hard
thresholds the final eigenvectors.

All selection thresholds are calibrated for unit noise, so the pipeline
rescales the sample covariance by 1/sigma^2 up front (the known value if
supplied, otherwise the median of the diagonal).  Reported spike estimates
are mapped back to the original scale, sigma^2 (l_hat - 1).

Estimators accept either ``data`` (observations in rows; the covariance is
never materialized beyond the needed blocks) or an explicit covariance
``cov`` with a nominal sample size ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rates import DEFAULT_KAPPA, signal_strength


@dataclass
class EstimatorConfig:
    """Thresholding constants for the selection stages.

    gamma1       stage-1 diagonal threshold multiplier  (-inf keeps everything,
                 reducing aspca to ordinary PCA when the rank is supplied)
    gamma1_bar   conservative diagonal multiplier used by rank estimation
    gamma1_prime lenient diagonal multiplier sizing the rank-estimation
                 correction term
    kappa        limit bound on N/n; enters the stage-2 threshold
    gamma2       stage-2 score multiplier; defaults to sqrt(1.5) * kappa
    gamma3       final hard-threshold multiplier (0 disables thresholding)
    M_known      skip rank estimation and use this many components
    sigma2_known skip noise estimation and rescale by this value
    center       center columns before forming covariances (denominator n-1)
    """

    gamma1: float = 4.0
    gamma1_bar: float = 9.0
    gamma1_prime: float = 3.0
    kappa: float = DEFAULT_KAPPA
    gamma2: float = None
    gamma3: float = 3.0
    M_known: int = None
    sigma2_known: float = None
    center: bool = False

    def __post_init__(self):
        if self.gamma2 is None:
            self.gamma2 = math.sqrt(1.5) * self.kappa
        if math.isnan(self.gamma1):
            raise ValueError("gamma1 must be a number (or -inf to disable selection)")
        if not (self.gamma1_bar > self.gamma1_prime > 0):
            raise ValueError("need gamma1_bar > gamma1_prime > 0")
        if not self.kappa > 2:
            raise ValueError("kappa must exceed 2")
        if not self.gamma2 > 0:
            raise ValueError("gamma2 must be positive")
        if not self.gamma3 >= 0:
            raise ValueError("gamma3 must be nonnegative")
        if self.M_known is not None and int(self.M_known) < 1:
            raise ValueError("M_known must be >= 1 when given")
        if self.sigma2_known is not None and not self.sigma2_known > 0:
            raise ValueError("sigma2_known must be positive when given")


def _fix_signs(vectors):
    # deterministic orientation: the entry of largest magnitude in each
    # column is made positive; ties resolve to the lowest index
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigen(A):
    """Descending eigendecomposition of a symmetric matrix with fixed signs.

    Requires the symmetry residual max|A - A'| to be at most 1e-10 relative
    to the matrix scale.  Returns (values, vectors) with values descending
    and each eigenvector oriented so its largest-magnitude entry is positive.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("need a square matrix")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    resid = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if resid > 1e-10 * scale:
        raise ValueError("matrix is not symmetric (residual %g)" % resid)
    w, v = np.linalg.eigh(0.5 * (A + A.T))
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    return w, _fix_signs(v)


def sample_covariance(data, center=False):
    """S = X'X / n for rows-as-observations X; centering switches to n-1."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be a 2-d array, observations in rows")
    n = X.shape[0]
    if center:
        if n < 2:
            raise ValueError("centering needs at least 2 observations")
        X = X - X.mean(axis=0)
        return X.T @ X / (n - 1)
    if n < 1:
        raise ValueError("need at least one observation")
    return X.T @ X / n


def estimate_noise_variance(cov):
    """Median of the covariance diagonal; consistent when spikes are sparse."""
    S = np.asarray(cov, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("need a square covariance matrix")
    return float(np.median(np.diag(S)))


class _CovSource:
    """Blockwise access to S = X'X/n, from raw data or an explicit matrix.

    ``scale`` multiplies every returned block, implementing the global
    1/sigma^2 rescaling without copying anything.
    """

    def __init__(self, data=None, cov=None, n=None, center=False):
        if (data is None) == (cov is None):
            raise ValueError("supply exactly one of data= or cov=")
        self.scale = 1.0
        if data is not None:
            X = np.asarray(data, dtype=float)
            if X.ndim != 2:
                raise ValueError("data must be a 2-d array, observations in rows")
            if X.shape[0] < 2:
                raise ValueError("need at least 2 observations")
            if center:
                X = X - X.mean(axis=0)
                self.n = X.shape[0] - 1
            else:
                self.n = X.shape[0]
            self.X, self.cov = X, None
            self.N = X.shape[1]
        else:
            S = np.asarray(cov, dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1]:
                raise ValueError("cov must be a square matrix")
            resid = float(np.max(np.abs(S - S.T)))
            if resid > 1e-10 * max(1.0, float(np.max(np.abs(S)))):
                raise ValueError("cov is not symmetric (residual %g)" % resid)
            if n is None or int(n) < 2:
                raise ValueError("explicit covariance needs a sample size n >= 2")
            self.X, self.cov = None, S
            self.n, self.N = int(n), S.shape[0]

    def diag(self):
        if self.cov is not None:
            d = np.diag(self.cov).copy()
        else:
            d = np.einsum("ij,ij->j", self.X, self.X) / self.n
        return self.scale * d

    def block(self, rows, cols):
        if self.cov is not None:
            return self.scale * self.cov[np.ix_(rows, cols)]
        return self.scale * (self.X[:, rows].T @ self.X[:, cols]) / self.n

    def project(self, rows, cols, W):
        # S[rows, cols] @ W without materializing the block when data-backed
        if self.cov is not None:
            return self.scale * (self.cov[np.ix_(rows, cols)] @ W)
        return self.scale * (self.X[:, rows].T @ (self.X[:, cols] @ W)) / self.n

    def top_eigen(self, idx, k):
        """Top-k eigenpairs of the principal submatrix S[idx, idx]."""
        idx = np.asarray(idx, dtype=int)
        if k < 0:
            raise ValueError("k must be nonnegative")
        if self.X is not None:
            # the SVD of the data block carries the spectral pieces of the
            # submatrix; never forms an |idx| x |idx| matrix
            _, s, vt = np.linalg.svd(self.X[:, idx], full_matrices=False)
            vals = self.scale * (s * s) / self.n
            vecs = _fix_signs(vt.T)
            if k > vals.size:
                raise ValueError("k exceeds the data rank")
            return vals[:k].copy(), vecs[:, :k].copy()
        w, v = sym_eigen(self.block(idx, idx))
        if k > w.size:
            raise ValueError("k exceeds the submatrix size")
        return w[:k].copy(), v[:, :k].copy()


def _noise_scale(src, cfg):
    if cfg.sigma2_known is not None:
        return float(cfg.sigma2_known), False
    return float(np.median(src.diag())), True


@dataclass
class EstimationResult:
    """Output of the selection-based estimators, zero-padded to N rows."""

    method: str
    rank: int
    spike_estimates: np.ndarray          # sigma2_hat * (eigenvalue - 1) per spike
    components: np.ndarray               # (N, rank) eigenvectors of the selected block
    components_thresholded: np.ndarray   # (N, rank) after the final hard threshold
    stage1_support: np.ndarray
    stage2_support: np.ndarray
    noise_variance: float
    noise_estimated: bool
    fallback_used: bool
    threshold_skipped: tuple = ()        # columns with nonpositive spike estimate
    threshold_degenerate: tuple = ()     # columns annihilated by the threshold

    def to_document(self):
        from .model import _encode_theta
        return {
            "method": self.method,
            "ambient_dim": int(self.components.shape[0]),
            "rank": int(self.rank),
            "spike_estimates": [float(v) for v in self.spike_estimates],
            "noise_variance": float(self.noise_variance),
            "noise_estimated": bool(self.noise_estimated),
            "stage1_support": [int(k) for k in self.stage1_support],
            "stage2_support": [int(k) for k in self.stage2_support],
            "fallback_used": bool(self.fallback_used),
            "threshold_skipped": [int(j) for j in self.threshold_skipped],
            "threshold_degenerate": [int(j) for j in self.threshold_degenerate],
            "components": _encode_theta(self.components, sparse_threshold=1.1),
            "components_thresholded": _encode_theta(self.components_thresholded,
                                                    sparse_threshold=1.1),
        }


def opca(data=None, cov=None, n=None, n_components=1, center=False):
    """Top eigenvectors of the sample covariance, as an (N, k) matrix."""
    src = _CovSource(data=data, cov=cov, n=n, center=center)
    k = int(n_components)
    cap = min(src.n, src.N) if src.X is not None else src.N
    if not 1 <= k <= cap:
        raise ValueError("n_components must lie in 1..%d" % cap)
    _, vecs = src.top_eigen(np.arange(src.N), k)
    return vecs


def hard_threshold(vec, threshold):
    """Zero entries with |v_k| <= threshold, renormalize to unit length.

    If every entry dies, returns the standard basis vector at the largest
    original magnitude and flags the degeneracy: (vector, flagged).
    """
    v = np.asarray(vec, dtype=float).ravel()
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if not np.any(v):
        raise ValueError("cannot threshold the zero vector")
    kept = np.where(np.abs(v) > threshold, v, 0.0)
    nrm = float(np.linalg.norm(kept))
    if nrm == 0.0:
        out = np.zeros_like(v)
        out[int(np.argmax(np.abs(v)))] = 1.0
        return out, True
    return kept / nrm, False


def _empty_result(method, src, sigma2, estimated, stage1, fallback):
    N = src.N
    return EstimationResult(
        method=method, rank=0,
        spike_estimates=np.zeros(0),
        components=np.zeros((N, 0)),
        components_thresholded=np.zeros((N, 0)),
        stage1_support=np.asarray(stage1, dtype=int),
        stage2_support=np.zeros(0, dtype=int),
        noise_variance=sigma2, noise_estimated=estimated,
        fallback_used=fallback,
    )


def _fallback_result(method, src, sigma2, estimated, k):
    """Screening selected nothing: fall back to full-covariance eigenvectors."""
    if k is None or k < 1:
        return _empty_result(method, src, sigma2, estimated, [], True)
    k = min(int(k), min(src.n, src.N))
    vals, vecs = src.top_eigen(np.arange(src.N), k)
    return EstimationResult(
        method=method, rank=k,
        spike_estimates=sigma2 * (vals - 1.0),
        components=vecs,
        components_thresholded=vecs.copy(),
        stage1_support=np.zeros(0, dtype=int),
        stage2_support=np.zeros(0, dtype=int),
        noise_variance=sigma2, noise_estimated=estimated,
        fallback_used=True,
    )


def estimate_rank(data=None, cov=None, n=None, config=None):
    """Estimate the number of spikes from the scaled sample covariance.

    Coordinates passing the conservative diagonal threshold (gamma1_bar)
    define the block whose eigenvalues are tested; the test level
      alpha_n = 2 sqrt(p/n) + p/n + 6 max(p/n, 1) sqrt(log(n v p)/(n v p))
    is sized by the count p of coordinates passing the lenient threshold
    (gamma1_prime).  The estimate is the largest k whose k-th eigenvalue
    exceeds 1 + alpha_n; an empty conservative set gives 0.
    """
    cfg = config or EstimatorConfig()
    src = _CovSource(data=data, cov=cov, n=n, center=cfg.center)
    sigma2, _ = _noise_scale(src, cfg)
    src.scale = 1.0 / sigma2
    return _estimate_rank_scaled(src, cfg)


def _estimate_rank_scaled(src, cfg):
    d = src.diag()
    root = math.sqrt(math.log(max(src.n, src.N)) / src.n)
    conservative = np.flatnonzero(d > 1.0 + cfg.gamma1_bar * root)
    if conservative.size == 0:
        return 0
    lenient = np.flatnonzero(d > 1.0 + cfg.gamma1_prime * root)
    p = int(lenient.size)
    ratio = p / src.n
    big = max(src.n, p)
    alpha_n = (2.0 * math.sqrt(ratio) + ratio
               + 6.0 * max(ratio, 1.0) * math.sqrt(math.log(big) / big))
    m_bar = min(src.n, conservative.size)
    vals, _ = src.top_eigen(conservative, m_bar)
    above = np.flatnonzero(vals > 1.0 + alpha_n)
    return int(above[-1] + 1) if above.size else 0


def spca(data=None, cov=None, n=None, gamma_n=None, n_components=1, config=None):
    """Single-stage selection: keep {k : S_kk > 1 + gamma_n}, then decompose.

    ``gamma_n`` is the absolute diagonal threshold offset (on the
    noise-rescaled covariance).  The number of components is supplied, not
    estimated.  An empty selection falls back to full-covariance PCA with
    the fallback flag set.
    """
    cfg = config or EstimatorConfig()
    if gamma_n is None or gamma_n < 0:
        raise ValueError("spca needs a nonnegative diagonal threshold gamma_n")
    k_req = int(n_components)
    if k_req < 1:
        raise ValueError("n_components must be >= 1")
    src = _CovSource(data=data, cov=cov, n=n, center=cfg.center)
    sigma2, estimated = _noise_scale(src, cfg)
    src.scale = 1.0 / sigma2
    sel = np.flatnonzero(src.diag() > 1.0 + gamma_n)
    if sel.size == 0:
        return _fallback_result("spca", src, sigma2, estimated, k_req)
    k = min(k_req, min(src.n, sel.size))
    vals, vecs = src.top_eigen(sel, k)
    components = np.zeros((src.N, k))
    components[sel] = vecs
    return EstimationResult(
        method="spca", rank=k,
        spike_estimates=sigma2 * (vals - 1.0),
        components=components,
        components_thresholded=components.copy(),
        stage1_support=sel,
        stage2_support=np.zeros(0, dtype=int),
        noise_variance=sigma2, noise_estimated=estimated,
        fallback_used=False,
    )


def aspca(data=None, cov=None, n=None, config=None):
    """Two-stage coordinate selection with rank estimation and thresholding.

    1. keep coordinates with S_kk > 1 + gamma1 sqrt(log(n v N)/n);
    2. eigendecompose that block;
    3. estimate the rank (unless M_known) and set spike estimates l_hat - 1;
    4. score every discarded coordinate by the squared covariance between it
       and the block eigenbasis scaled by 1/sqrt(l_hat);
    5. keep scores above [gamma2 (sqrt(log(n v N)/n) + sqrt(M_hat/n)/kappa)]^2;
    6. eigendecompose over the union, zero-pad to full length;
    7. hard threshold each eigenvector at
       gamma3 sqrt(log(n v N) / (n h(l_hat - 1))) and renormalize.

    Columns with nonpositive spike estimate skip step 7 and are recorded in
    ``threshold_skipped``.  An empty stage-1 selection falls back to
    full-covariance PCA (rank 0 unless M_known), with ``fallback_used`` set.
    """
    cfg = config or EstimatorConfig()
    src = _CovSource(data=data, cov=cov, n=n, center=cfg.center)
    sigma2, estimated = _noise_scale(src, cfg)
    src.scale = 1.0 / sigma2
    N, n_eff = src.N, src.n
    logf = math.log(max(n_eff, N))
    root = math.sqrt(logf / n_eff)

    sel1 = np.flatnonzero(src.diag() > 1.0 + cfg.gamma1 * root)
    if sel1.size == 0:
        return _fallback_result("aspca", src, sigma2, estimated, cfg.M_known)
    m1 = min(n_eff, sel1.size)
    vals1, vecs1 = src.top_eigen(sel1, m1)

    if cfg.M_known is not None:
        rank = min(int(cfg.M_known), m1)
    else:
        rank = min(_estimate_rank_scaled(src, cfg), m1)
    # the normalized basis needs strictly positive block eigenvalues
    while rank > 0 and vals1[rank - 1] <= 0.0:
        rank -= 1
    if rank == 0:
        return _empty_result("aspca", src, sigma2, estimated, sel1, False)

    lam_unit = vals1[:rank] - 1.0
    complement = np.setdiff1d(np.arange(N), sel1)
    if complement.size:
        basis = vecs1[:, :rank] / np.sqrt(vals1[:rank])
        scores = src.project(complement, sel1, basis)
        t_k = np.einsum("ij,ij->i", scores, scores)
        g2n = cfg.gamma2 * (root + math.sqrt(rank / n_eff) / cfg.kappa)
        sel2 = complement[t_k > g2n * g2n]
    else:
        sel2 = np.zeros(0, dtype=int)

    union = np.sort(np.concatenate([sel1, sel2]))
    vals2, vecs2 = src.top_eigen(union, rank)
    components = np.zeros((N, rank))
    components[union] = vecs2

    thresholded = components.copy()
    skipped, degenerate = [], []
    for j in range(rank):
        if lam_unit[j] <= 0.0:
            skipped.append(j)
            continue
        level = cfg.gamma3 * math.sqrt(logf / (n_eff * signal_strength(lam_unit[j])))
        vec, died = hard_threshold(components[:, j], level)
        thresholded[:, j] = vec
        if died:
            degenerate.append(j)

    return EstimationResult(
        method="aspca", rank=rank,
        spike_estimates=sigma2 * lam_unit,
        components=components,
        components_thresholded=thresholded,
        stage1_support=sel1,
        stage2_support=sel2,
        noise_variance=sigma2, noise_estimated=estimated,
        fallback_used=False,
        threshold_skipped=tuple(skipped),
        threshold_degenerate=tuple(degenerate),
    )


def influence_operator(model, nu):
    """Reduced resolvent H_nu of a spiked covariance at its nu-th spike.

    H_nu = sum_{mu != nu} theta_mu theta_mu' / (lambda_mu - lambda_nu)
           - (1/lambda_nu) (I - sum_mu theta_mu theta_mu').

    Annihilates theta_nu, maps theta_mu to theta_mu / (lambda_mu - lambda_nu),
    and acts as -1/lambda_nu on the noise space, independently of sigma^2.
    """
    lam = np.asarray(model.lambdas, dtype=float)
    theta = np.asarray(model.theta, dtype=float)
    N, M = theta.shape
    if not 1 <= nu <= M:
        raise ValueError("spike index nu=%r out of range 1..%d" % (nu, M))
    lam_nu = lam[nu - 1]
    H = np.zeros((N, N))
    for mu in range(M):
        if mu == nu - 1:
            continue
        H += np.outer(theta[:, mu], theta[:, mu]) / (lam[mu] - lam_nu)
    H -= (np.eye(N) - theta @ theta.T) / lam_nu
    return H


@dataclass
class PerturbationExpansion:
    """First-order eigenvector expansion of A+B around A with residual bounds."""

    first_order: np.ndarray   # -H_r(A) B p_r(A)
    delta: float              # (||H_r B|| + |l_r(A+B) - l_r(A)|.||H_r||) / 2
    delta_bar: float          # ||B|| / min_gap
    residual_norm: float      # realized ||R_r||
    residual_bound: float     # min of the two bounds below
    crude_bound: float        # 10 delta_bar^2
    refined_bound: float      # expansion-based bound; inf outside its domain
    refined_valid: bool       # delta < (sqrt(5) - 1)/4


def perturbation_expand(A, B, r):
    """Expand the r-th eigenvector of A+B around A (descending order, 1-based).

    R_r = sign(<p_r(A+B), p_r(A)>) p_r(A+B) - p_r(A) + H_r(A) B p_r(A),
    with ||R_r|| certified by min(10 delta_bar^2, refined expansion bound);
    the refined bound requires delta < (sqrt(5)-1)/4.  The r-th eigenvalue
    of A must be simple.
    """
    wA, vA = sym_eigen(A)
    T = wA.size
    if not 1 <= r <= T:
        raise ValueError("index r=%r out of range 1..%d" % (r, T))
    B = np.asarray(B, dtype=float)
    if B.shape != (T, T):
        raise ValueError("B must match A's shape")
    wAB, vAB = sym_eigen(A + B)

    lam_r = wA[r - 1]
    others = np.delete(wA, r - 1)
    min_gap = float(np.min(np.abs(others - lam_r))) if others.size else math.inf
    if min_gap <= 1e-10 * max(1.0, float(np.max(np.abs(wA)))):
        raise ValueError("the %d-th eigenvalue of A is not simple" % r)

    p_r = vA[:, r - 1]
    coef = np.zeros(T)
    mask = np.arange(T) != r - 1
    coef[mask] = 1.0 / (wA[mask] - lam_r)
    H = (vA * coef) @ vA.T

    Bp = B @ p_r
    first_order = -(H @ Bp)
    hbp = float(np.linalg.norm(H @ Bp))
    hb_norm = float(np.linalg.norm(H @ B, 2))
    h_norm = 1.0 / min_gap
    b_norm = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (B + B.T)))))
    delta = 0.5 * (hb_norm + abs(wAB[r - 1] - lam_r) * h_norm)
    delta_bar = b_norm / min_gap

    crude = 10.0 * delta_bar ** 2
    refined_valid = delta < (math.sqrt(5.0) - 1.0) / 4.0
    if refined_valid:
        qd = 2.0 * delta * (1.0 + 2.0 * delta)
        refined = hbp * (qd / (1.0 - qd) + hbp / (1.0 - qd) ** 2)
    else:
        refined = math.inf
    bound = min(crude, refined)

    # the expansion certifies the representative of p_r(A+B) aligned with
    # p_r(A); orient before differencing or the first-order term doubles
    sign = 1.0 if float(vAB[:, r - 1] @ p_r) >= 0 else -1.0
    residual = sign * vAB[:, r - 1] - p_r + H @ Bp
    return PerturbationExpansion(
        first_order=first_order,
        delta=float(delta),
        delta_bar=float(delta_bar),
        residual_norm=float(np.linalg.norm(residual)),
        residual_bound=float(bound),
        crude_bound=float(crude),
        refined_bound=float(refined),
        refined_valid=bool(refined_valid),
    )
