"""Closed-form risk rates, regime classification and tail bounds.

Everything in this module is deterministic arithmetic on model parameters:
the signal-strength functions h, eta and g of the spike sizes, the minimax
rate of principal eigenvector estimation over lq balls (with its regime
classification), the oracle risk of ordinary PCA, the rate certificate for
the two-stage sparse estimator, and the Gaussian / chi-square / Wishart
tail bounds used by the Monte Carlo concentration checks.

Spike indices (``nu``) are 1-based throughout, matching the convention
that lambdas[0] is the largest spike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Packing-sphere constant: log(9/8) controls both the sign-packing rate
# (9/8)^{m/2} and the bounded-below regime of the minimax rate.
C1_PACKING = math.log(9.0 / 8.0)

# Default thresholding constants shared with the estimator pipeline.
DEFAULT_KAPPA = 2.1
DEFAULT_GAMMA2 = math.sqrt(1.5) * DEFAULT_KAPPA
DEFAULT_GAMMA2_PLUS = 1.5 * DEFAULT_GAMMA2
DEFAULT_GAMMA2_MINUS = 0.5 * DEFAULT_GAMMA2


def _check_lambdas(lambdas):
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("need at least one spike")
    if not np.all(lam > 0):
        raise ValueError("spike sizes must be positive")
    if lam.size > 1 and not np.all(np.diff(lam) < 0):
        raise ValueError("spike sizes must be strictly decreasing")
    return lam


def _check_nu(nu, M):
    if not (1 <= nu <= M):
        raise ValueError("spike index nu=%r out of range 1..%d" % (nu, M))


def signal_strength(lam):
    """h(lam) = lam^2 / (1 + lam), the effective SNR of a spike of size lam."""
    lam = float(lam)
    if lam <= 0:
        raise ValueError("spike size must be positive")
    return lam * lam / (1.0 + lam)


def shrinkage_factor(lam):
    """eta(lam) = lam / (1 + lam); note h(lam) = lam * eta(lam)."""
    lam = float(lam)
    if lam <= 0:
        raise ValueError("spike size must be positive")
    return lam / (1.0 + lam)


def pair_separation(lam, tau):
    """g(lam, tau) = (lam - tau)^2 / ((1+lam)(1+tau)).

    Controls the difficulty of telling the two spikes apart; satisfies
    g(lam, tau) = (lam - tau) * (eta(lam) - eta(tau)).
    """
    lam, tau = float(lam), float(tau)
    if lam <= 0 or tau <= 0:
        raise ValueError("spike sizes must be positive")
    return (lam - tau) ** 2 / ((1.0 + lam) * (1.0 + tau))


def sphere_dim(q, C):
    """Integer m with m^(1-q/2) <= C^q < (m+1)^(1-q/2).

    This is the largest embedded-sphere dimension affordable inside the lq
    ball of radius C >= 1 (0 < q < 2); there is exactly one such m >= 1.
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    if C < 1:
        raise ValueError("lq radius must be >= 1")
    alpha = 1.0 - q / 2.0
    Cq = float(C) ** q
    log_m = q * math.log(C) / alpha if C > 1 else 0.0
    if log_m > 35.0:
        # beyond exact float integers the +-1 bracket is unresolvable (and
        # walking to it would not terminate); the direct solution stands
        return int(math.floor(math.exp(log_m)))
    m = max(1, int(math.floor(Cq ** (1.0 / alpha))))
    # float guards: walk to the exact bracket
    while (m + 1) ** alpha <= Cq:
        m += 1
    while m > 1 and m ** alpha > Cq:
        m -= 1
    return m


def polar_radius(q, C, m, tol=1e-12):
    """Polar angle radius r in [0, 1] of the m-sphere embedded in the lq ball.

    Solves (1 - r^2)^(q/2) + m^(1-q/2) r^q = C^q for the smallest root.
    The left side increases from 1 (r=0) to its maximum (1+m)^(1-q/2) at
    r^2 = m/(m+1), so a root exists iff C^q <= (1+m)^(1-q/2); beyond that
    the whole sphere fits and r = 1.  C = 1 only affords the poles (r = 0).
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    if C < 1:
        raise ValueError("lq radius must be >= 1")
    if m < 1:
        raise ValueError("sphere dimension must be >= 1")
    Cq = float(C) ** q
    if Cq <= 1.0:
        return 0.0
    peak = (1.0 + m) ** (1.0 - q / 2.0)
    if Cq > peak:
        return 1.0

    def budget(x):
        # x = r^2 on the increasing branch [0, m/(m+1)]
        return (1.0 - x) ** (q / 2.0) + m ** (1.0 - q / 2.0) * x ** (q / 2.0)

    lo, hi = 0.0, m / (m + 1.0)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if budget(mid) < Cq:
            lo = mid
        else:
            hi = mid
    return math.sqrt(0.5 * (lo + hi))


def weighted_sparsity(q, radii, rhos):
    """rho_q(C) = sum_nu rhos[nu]^(q/2) * radii[nu]^q, always >= 1.

    ``rhos`` are the limiting spike ratios lambda_nu / lambda_1, so
    rhos[0] must be 1 and the sequence nonincreasing and positive.
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    radii = np.asarray(radii, dtype=float).ravel()
    rhos = np.asarray(rhos, dtype=float).ravel()
    if radii.size != rhos.size:
        raise ValueError("radii and rhos must have equal length")
    if radii.size == 0:
        raise ValueError("need at least one spike")
    if np.any(radii < 1):
        raise ValueError("lq radii must be >= 1")
    if abs(rhos[0] - 1.0) > 1e-12:
        raise ValueError("rhos[0] must equal 1")
    if np.any(rhos <= 0) or np.any(np.diff(rhos) > 1e-12):
        raise ValueError("rhos must be positive and nonincreasing")
    return float(np.sum(rhos ** (q / 2.0) * radii ** q))


def opca_risk(n, N, lambdas, nu):
    """Exact large-sample risk of the ordinary PCA eigenvector estimate.

    E L(theta_hat_nu, theta_nu) ~ (N - M) / (n h(lambda_nu))
        + (1/n) sum_{mu != nu} (lambda_mu + 1)(lambda_nu + 1) / (lambda_nu - lambda_mu)^2.
    """
    lam = _check_lambdas(lambdas)
    M = lam.size
    _check_nu(nu, M)
    if not (N > M and n >= 1):
        raise ValueError("need N > M and n >= 1")
    lam_nu = lam[nu - 1]
    risk = (N - M) / (n * signal_strength(lam_nu))
    for mu in range(M):
        if mu == nu - 1:
            continue
        risk += (lam[mu] + 1.0) * (lam_nu + 1.0) / (n * (lam_nu - lam[mu]) ** 2)
    return float(risk)


@dataclass
class RegimeClassification:
    """Minimax rate delta_n for one spike with its dominating-regime tag."""

    case_tag: str
    delta_n: float
    constants: dict = field(default_factory=dict)


def minimax_rate(n, N, M, q, C_nu, lam_nu, alpha=None, kappa_log=1.0):
    """Minimax lower-rate delta_n for estimating spike nu over an lq ball.

    With x = n h(lambda_nu), y = c1 (N - M), z = A_q Cbar^q x^(q/2) where
    Cbar^q = C_nu^q - 1 and A_q = (9 c1 / 2)^(1-q/2):

      x smallest -> 'bounded-below',     delta_n = c1
      y smallest -> 'N-dominated',       delta_n = y / x
      z smallest -> 'sparsity-dominated' delta_n = z / x

    Ties resolve to the first listed branch.  When ``alpha`` in (0, 1) is
    given, the log-sparse condition is checked first: if
    A_{q,alpha} Cbar^q (x / log N)^(q/2) <= min(x / log N, kappa_log N^(1-alpha))
    with A_{q,alpha} = (alpha/2)^(1-q/2), then
    delta_n = (alpha/9)^(1-q/2) Cbar^q (log N / x)^(1-q/2).
    Non-finite intermediates fall through to 'inconsistent' with delta_n = c1.
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    if not (N > M >= 1 and n >= 1 and N >= 2):
        raise ValueError("need N > M >= 1, n >= 1, N >= 2")
    Cbar_q = float(C_nu) ** q - 1.0
    if not Cbar_q > 0:
        raise ValueError("lq radius must exceed 1 (C^q - 1 > 0)")
    expo = 1.0 - q / 2.0
    x = n * signal_strength(lam_nu)
    logN = math.log(N)
    constants = {"c1": C1_PACKING, "x_nh": x, "Cbar_q": Cbar_q}

    if alpha is not None:
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        A_qa = (alpha / 2.0) ** expo
        lhs = A_qa * Cbar_q * (x / logN) ** (q / 2.0)
        cap = min(x / logN, kappa_log * N ** (1.0 - alpha))
        constants.update(A_q_alpha=A_qa, log_sparse_lhs=lhs, log_sparse_cap=cap)
        if math.isfinite(lhs) and math.isfinite(cap) and lhs <= cap:
            c_qa = (alpha / 9.0) ** expo
            delta = c_qa * Cbar_q * (logN / x) ** expo
            constants.update(c_q_alpha=c_qa)
            return RegimeClassification("log-sparse", float(delta), constants)

    A_q = (9.0 * C1_PACKING / 2.0) ** expo
    y = C1_PACKING * (N - M)
    z = A_q * Cbar_q * x ** (q / 2.0)
    constants.update(A_q=A_q, y_ambient=y, z_sparse=z)
    if math.isfinite(x) and x <= min(y, z):
        return RegimeClassification("bounded-below", C1_PACKING, constants)
    if math.isfinite(y) and y <= min(x, z):
        return RegimeClassification("N-dominated", float(y / x), constants)
    if math.isfinite(z) and z <= min(x, y):
        return RegimeClassification("sparsity-dominated", float(z / x), constants)
    return RegimeClassification("inconsistent", C1_PACKING, constants)


def cross_component_floor(n, lambdas, nu):
    """Lower-rate floor (1/n) max_{mu != nu} 1 / g(lambda_mu, lambda_nu).

    Captures the cost of separating spike nu from its nearest competitor;
    defined only for models with at least two spikes.
    """
    lam = _check_lambdas(lambdas)
    M = lam.size
    if M < 2:
        raise ValueError("cross-component floor needs at least two spikes")
    _check_nu(nu, M)
    if n < 1:
        raise ValueError("need n >= 1")
    worst = max(
        1.0 / pair_separation(lam[mu], lam[nu - 1])
        for mu in range(M)
        if mu != nu - 1
    )
    return float(worst / n)


@dataclass
class RateBreakdown:
    """Additive decomposition of the two-stage estimator's rate certificate."""

    threshold_term: float   # tau_bar^2: resolution of the final hard threshold
    selection_term: float   # J_2^+ / (n h): cost of the stage-2 selected set
    cross_term: float       # sum over mu != nu of 1 / (n g(lambda_mu, lambda_nu))
    selected_cap: float     # J_2^+ itself, capped at N
    total: float = 0.0

    def __post_init__(self):
        self.total = self.threshold_term + self.selection_term + self.cross_term


def aspca_rate(n, N, q, radii, lambdas, nu,
               gamma2_plus=DEFAULT_GAMMA2_PLUS, gamma2_minus=DEFAULT_GAMMA2_MINUS):
    """Finite-sample rate certificate for the two-stage sparse estimator.

    threshold_term tau_bar^2 = c_q gamma2_plus^(2-q) C_nu^q
        (log(n v N) / (n h_nu))^(1-q/2) with c_q = 2/(2-q);
    selected_cap J_2^+ = gamma2_minus^(-q) M^(q/2)
        (sum_mu h(lambda_mu)^(q/2) C_mu^q) (n / log(n v N))^(q/2), capped at N.
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    lam = _check_lambdas(lambdas)
    M = lam.size
    _check_nu(nu, M)
    radii = np.asarray(radii, dtype=float).ravel()
    if radii.size != M or np.any(radii < 1):
        raise ValueError("need one lq radius >= 1 per spike")
    if not (N > M and n >= 2):
        raise ValueError("need N > M and n >= 2")
    logf = math.log(max(n, N))
    h_nu = signal_strength(lam[nu - 1])
    c_q = 2.0 / (2.0 - q)
    threshold_term = (
        c_q * gamma2_plus ** (2.0 - q) * radii[nu - 1] ** q
        * (logf / (n * h_nu)) ** (1.0 - q / 2.0)
    )
    sparsity_mass = sum(
        signal_strength(lam[mu]) ** (q / 2.0) * radii[mu] ** q for mu in range(M)
    )
    j2_plus = (
        gamma2_minus ** (-q) * M ** (q / 2.0) * sparsity_mass
        * (n / logf) ** (q / 2.0)
    )
    selected_cap = min(float(j2_plus), float(N))
    selection_term = selected_cap / (n * h_nu)
    cross_term = sum(
        1.0 / (n * pair_separation(lam[mu], lam[nu - 1]))
        for mu in range(M)
        if mu != nu - 1
    )
    return RateBreakdown(
        threshold_term=float(threshold_term),
        selection_term=float(selection_term),
        cross_term=float(cross_term),
        selected_cap=selected_cap,
    )


def aspca_upper_bound(n, N, q, radii, lambdas, nu, K=1.0, K_prime=1.0, rhos=None):
    """Oracle upper bound on the two-stage estimator's risk for spike nu.

    K (C_nu^q + K' rho_nu^(-q) rho_q(C) / log(n v N))
        (log(n v N) / (n h(lambda_nu)))^(1-q/2)
      + sum_{mu != nu} 1 / (n g(lambda_mu, lambda_nu)).

    ``rhos`` defaults to the finite-sample ratios lambda / lambda_1.
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    lam = _check_lambdas(lambdas)
    M = lam.size
    _check_nu(nu, M)
    radii = np.asarray(radii, dtype=float).ravel()
    if radii.size != M or np.any(radii < 1):
        raise ValueError("need one lq radius >= 1 per spike")
    if not (N > M and n >= 2):
        raise ValueError("need N > M and n >= 2")
    if rhos is None:
        rhos = lam / lam[0]
    rho = np.asarray(rhos, dtype=float).ravel()
    rho_q = weighted_sparsity(q, radii, rho)
    logf = math.log(max(n, N))
    h_nu = signal_strength(lam[nu - 1])
    main = (
        K * (radii[nu - 1] ** q + K_prime * rho[nu - 1] ** (-q) * rho_q / logf)
        * (logf / (n * h_nu)) ** (1.0 - q / 2.0)
    )
    cross = sum(
        1.0 / (n * pair_separation(lam[mu], lam[nu - 1]))
        for mu in range(M)
        if mu != nu - 1
    )
    return float(main + cross)


def condition_diagnostics(n, N, q, radii, lambdas, rhos=None):
    """Named consistency-condition quantities for a model at sample size n.

    Returns a dict of the quantities whose smallness drives the theory:
      'pca_noise_ratio'     N / (n h(lambda_1))                  (ordinary PCA)
      'log_dim_ratio'       log N / log n
      'log_sq_over_n'       (log n)^2 / (n lambda_1^2)
      'sparse_mass_ratio'   rho_q(C) (log N)^(1/2-q/4) / (lambda_1^(1-q/2) n^(1/2-q/4))
      'spike_selectable'    per-spike list of
                            Cbar_nu^q (n h_nu)^(q/2) / N vs the packing
                            threshold c1^(q/2) / A_q (values > threshold mean
                            the sparse regime, not the ambient one, binds).
    """
    if not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    lam = _check_lambdas(lambdas)
    M = lam.size
    radii = np.asarray(radii, dtype=float).ravel()
    if radii.size != M or np.any(radii < 1):
        raise ValueError("need one lq radius >= 1 per spike")
    if not (N > M and n >= 2 and N >= 2):
        raise ValueError("need N > M, n >= 2, N >= 2")
    if rhos is None:
        rhos = lam / lam[0]
    rho = np.asarray(rhos, dtype=float).ravel()
    rho_q = weighted_sparsity(q, radii, rho)
    expo = 1.0 - q / 2.0
    A_q = (9.0 * C1_PACKING / 2.0) ** expo
    threshold = C1_PACKING ** (q / 2.0) / A_q
    per_spike = []
    for nu in range(1, M + 1):
        Cbar_q = radii[nu - 1] ** q - 1.0
        x = n * signal_strength(lam[nu - 1])
        value = Cbar_q * x ** (q / 2.0) / N if Cbar_q > 0 else 0.0
        per_spike.append({
            "nu": nu,
            "value": float(value),
            "threshold": float(threshold),
            "sparse_regime": bool(value > threshold),
        })
    return {
        "pca_noise_ratio": float(N / (n * signal_strength(lam[0]))),
        "log_dim_ratio": float(math.log(N) / math.log(n)),
        "log_sq_over_n": float(math.log(n) ** 2 / (n * lam[0] ** 2)),
        "sparse_mass_ratio": float(
            rho_q * math.log(N) ** (0.5 - q / 4.0)
            / (lam[0] ** expo * n ** (0.5 - q / 4.0))
        ),
        "spike_selectable": per_spike,
    }


@dataclass
class TailBound:
    """One evaluated concentration bound with its event threshold."""

    kind: str
    value: float        # probability bound; nan when out of domain
    threshold: float    # event boundary on the monitored statistic
    in_domain: bool
    description: str
    params: dict = field(default_factory=dict)


def _require(params, *names):
    missing = [k for k in names if k not in params]
    if missing:
        raise ValueError("missing parameters %s" % ", ".join(missing))
    extra = sorted(set(params) - set(names))
    if extra:
        raise ValueError("unknown parameters %s" % ", ".join(extra))
    return [float(params[k]) for k in names]


def wishart_norm_offset(n, N):
    """t_n = 6 max(N/n, 1) sqrt(log(n v N) / (n v N)), the norm-tail offset."""
    n, N = int(n), int(N)
    big = max(n, N)
    return 6.0 * max(N / n, 1.0) * math.sqrt(math.log(big) / big)


def tail_bound(kind, **params):
    """Evaluate one named tail bound at the given parameters.

    Out-of-domain parameters flag ``in_domain=False`` with value nan rather
    than raising, so grids of evaluations stay total.

    kinds (Z always a matrix of iid standard normals):
      'chi2_upper':      P(chi2_n > n(1+eps)) <= exp(-3 n eps^2 / 16), 0<eps<1/2
      'chi2_lower':      P(chi2_n < n(1-eps)) <= exp(-n eps^2 / 4),    0<eps<1
      'chi2_upper_poly': P(chi2_n > n(1+eps)) <= sqrt(2)/(eps sqrt(n))
                            * exp(-n eps^2 / 4), 0<eps<n^(1/16), n>=16
      'cross_product':   P(|mean of n products of independent N(0,1) pairs|
                            > sqrt(b/n)) <= 2 exp(-3b/2), 0<b<=sqrt(n)/10
      'operator_norm':   P(||Z Z'/n - I_N|| > 2 sqrt(N/n) + N/n + c t_n)
                            <= 2 (n v N)^(-c^2), Z is N x n, c > 0
      'singular_max':    P(s_max(Z)/sqrt(q) > 1 + sqrt(p/q) + t) <= exp(-q t^2/2),
                            Z is p x q, p <= q, t > 0
      'singular_min':    P(s_min(Z)/sqrt(q) < 1 - sqrt(p/q) - t) <= exp(-q t^2/2)
      'eigen_max':       P(l_1(Z Z'/q) > m1 + t)
                            <= exp(-(q/2)(sqrt(t+m1) - sqrt(m1))^2),
                            m1 = (1 + sqrt(p/q))^2
      'eigen_min':       P(l_p(Z Z'/q) < mp - t)
                            <= exp(-(q/2)(sqrt(t+mp) - sqrt(mp))^2),
                            mp = (1 - sqrt(p/q))^2, t > 0
    """
    if kind == "chi2_upper":
        n, eps = _require(params, "n", "eps")
        ok = n >= 1 and 0 < eps < 0.5
        value = math.exp(-3.0 * n * eps * eps / 16.0) if ok else math.nan
        return TailBound(kind, value, n * (1.0 + eps), ok,
                         "chi-square upper tail, exponential branch", dict(params))
    if kind == "chi2_lower":
        n, eps = _require(params, "n", "eps")
        ok = n >= 1 and 0 < eps < 1
        value = math.exp(-n * eps * eps / 4.0) if ok else math.nan
        return TailBound(kind, value, n * (1.0 - eps), ok,
                         "chi-square lower tail", dict(params))
    if kind == "chi2_upper_poly":
        n, eps = _require(params, "n", "eps")
        ok = n >= 16 and 0 < eps < n ** (1.0 / 16.0)
        value = (math.sqrt(2.0) / (eps * math.sqrt(n)) * math.exp(-n * eps * eps / 4.0)
                 if ok else math.nan)
        return TailBound(kind, value, n * (1.0 + eps), ok,
                         "chi-square upper tail, polynomial-factor branch", dict(params))
    if kind == "cross_product":
        n, b = _require(params, "n", "b")
        ok = n >= 1 and 0 < b <= math.sqrt(n) / 10.0
        value = 2.0 * math.exp(-1.5 * b) if ok else math.nan
        return TailBound(kind, value, math.sqrt(b / n), ok,
                         "cross-product mean of independent normal pairs", dict(params))
    if kind == "operator_norm":
        n, N, c = _require(params, "n", "dim", "c")
        n, N = int(n), int(N)
        ok = n >= 2 and N >= 1 and c > 0
        t_n = wishart_norm_offset(n, N) if ok else math.nan
        thresh = 2.0 * math.sqrt(N / n) + N / n + c * t_n if ok else math.nan
        value = 2.0 * max(n, N) ** (-c * c) if ok else math.nan
        return TailBound(kind, value, thresh, ok,
                         "Wishart operator-norm deviation from identity", dict(params))
    if kind in ("singular_max", "singular_min"):
        p, qq, t = _require(params, "p", "q", "t")
        p, qq = int(p), int(qq)
        ok = 1 <= p <= qq and t > 0
        value = math.exp(-qq * t * t / 2.0) if ok else math.nan
        edge = math.sqrt(p / qq) if ok else math.nan
        thresh = (1.0 + edge + t) if kind == "singular_max" else (1.0 - edge - t)
        return TailBound(kind, value, thresh if ok else math.nan, ok,
                         "extreme singular value of a Gaussian matrix", dict(params))
    if kind in ("eigen_max", "eigen_min"):
        p, qq, t = _require(params, "p", "q", "t")
        p, qq = int(p), int(qq)
        edge = math.sqrt(p / qq) if qq else math.nan
        if kind == "eigen_max":
            center = (1.0 + edge) ** 2
            ok = 1 <= p <= qq and t > 0
            thresh = center + t
        else:
            center = (1.0 - edge) ** 2
            ok = 1 <= p <= qq and t > 0
            thresh = center - t
        value = (math.exp(-0.5 * qq * (math.sqrt(t + center) - math.sqrt(center)) ** 2)
                 if ok else math.nan)
        return TailBound(kind, value, thresh if ok else math.nan, ok,
                         "extreme eigenvalue of a white Wishart matrix", dict(params))
    raise ValueError("unknown tail bound kind %r" % kind)
