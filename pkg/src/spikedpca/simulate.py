"""Monte Carlo harness: risk curves, selection brackets, tail-bound checks.

Replication streams derive from a master seed through spawn keys indexed
by (grid point, replication), so reports are bit-reproducible, threading
cannot reorder anything, and growing the replication count never changes
the replications already drawn.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimators import EstimatorConfig, aspca, opca, spca
from .estimators import influence_operator
from .metrics import alignment_loss
from .model import LqSpaceSpec, build_covariance, make_sparse_basis, sample_dataset
from .rates import aspca_rate, opca_risk, signal_strength, tail_bound
from .serialize import config_sha256, csv_text


def replication_rng(master_seed, point_index, rep_index):
    """Stream for one replication; stable under extensions of the grid or reps."""
    seq = np.random.SeedSequence(int(master_seed),
                                 spawn_key=(int(point_index), int(rep_index)))
    return np.random.default_rng(seq)


@dataclass
class ModelRecipe:
    """Serializable recipe that rebuilds the population model at any ambient dim.

    The basis draw is seeded per grid point from ``basis_seed``, so the same
    recipe instantiated twice gives identical models.
    """

    q: float
    radii: tuple
    lambdas: tuple
    support_sizes: tuple
    sigma2: float = 1.0
    disjoint: bool = True
    weights: str = "random"
    basis_seed: int = 0

    def __post_init__(self):
        if not (len(self.radii) == len(self.lambdas) == len(self.support_sizes)):
            raise ValueError("radii, lambdas, support_sizes must share a length")

    def build(self, ambient_dim, point_index=0):
        spec = LqSpaceSpec(q=self.q, radii=tuple(self.radii),
                           ambient_dim=int(ambient_dim), rank=len(self.lambdas))
        seed = np.random.SeedSequence(int(self.basis_seed),
                                      spawn_key=(int(point_index),))
        theta = make_sparse_basis(spec, self.support_sizes, seed,
                                  disjoint=self.disjoint, weights=self.weights)
        return build_covariance(self.lambdas, theta, self.sigma2), spec

    def to_dict(self):
        return {
            "q": float(self.q),
            "radii": [float(c) for c in self.radii],
            "lambdas": [float(l) for l in self.lambdas],
            "support_sizes": [int(s) for s in self.support_sizes],
            "sigma2": float(self.sigma2),
            "disjoint": bool(self.disjoint),
            "weights": self.weights,
            "basis_seed": int(self.basis_seed),
        }


@dataclass
class EstimatorSpec:
    """One estimator entry of a risk experiment."""

    name: str                      # 'opca' | 'spca' | 'aspca'
    config: EstimatorConfig = None
    spca_gamma_mult: float = 4.0   # gamma_n = mult * sqrt(log(n v N)/n)
    label: str = None

    def __post_init__(self):
        if self.name not in ("opca", "spca", "aspca"):
            raise ValueError("unknown estimator %r" % self.name)
        if self.config is None:
            self.config = EstimatorConfig()
        if self.label is None:
            self.label = self.name


@dataclass
class RiskRow:
    """One grid point for one estimator."""

    estimator: str
    n: int
    N: int
    nu: int
    reps: int
    reps_used: int
    reps_failed: int
    mean_loss: float
    median_loss: float
    std_error: float
    theory: float
    aborted: bool
    seed: str
    note: str = ""


RISK_COLUMNS = ("estimator", "n", "N", "nu", "reps", "reps_used", "reps_failed",
                "mean_loss", "median_loss", "std_error", "theory", "aborted",
                "seed", "note")


@dataclass
class SlopeFit:
    estimator: str
    predictor: str
    slope: float
    intercept: float
    stderr: float
    n_points: int
    n_excluded: int


@dataclass
class RiskReport:
    """All rows of a risk experiment plus its identifying config and seed."""

    config: dict
    master_seed: int
    rows: list
    slope_fits: list = field(default_factory=list)

    @property
    def config_digest(self):
        return config_sha256(self.config)

    def to_csv(self):
        preamble = ("config_sha256=%s" % self.config_digest,
                    "master_seed=%d" % self.master_seed)
        rows = [[getattr(r, c) for c in RISK_COLUMNS] for r in self.rows]
        return csv_text(RISK_COLUMNS, rows, preamble)

    def to_document(self):
        return {
            "kind": "risk-report",
            "config": self.config,
            "config_sha256": self.config_digest,
            "master_seed": int(self.master_seed),
            "rows": [asdict(r) for r in self.rows],
            "slope_fits": [asdict(f) for f in self.slope_fits],
        }


def _estimate_column(espec, model, n, N, nu, data, cov):
    """Run one estimator on one draw; returns (status, nu-th column or None)."""
    kwargs = {"data": data} if data is not None else {"cov": cov, "n": n}
    if espec.name == "opca":
        vecs = opca(n_components=nu, center=espec.config.center, **kwargs)
        return "ok", vecs[:, nu - 1]
    if espec.name == "spca":
        gamma_n = espec.spca_gamma_mult * math.sqrt(math.log(max(n, N)) / n)
        result = spca(gamma_n=gamma_n, n_components=nu, config=espec.config,
                      **kwargs)
    else:
        result = aspca(config=espec.config, **kwargs)
    if result.fallback_used:
        return "fallback", None
    if result.rank < nu:
        return "no-rank", None
    return "ok", result.components_thresholded[:, nu - 1]


def run_risk_mc(recipe, grid, estimators, reps, master_seed, nu=1,
                noiseless=False, threads=1, abort_fraction=0.5,
                config_record=None):
    """Estimate mean losses over a grid of (n, N) points.

    Every replication draws one dataset shared by all estimators (paired
    comparisons), scores the nu-th component against the truth with the
    alignment loss, and failed replications (fallback, missing rank) are
    counted but never averaged.  An estimator failing more than
    ``abort_fraction`` of a point's replications gets an aborted row with
    nan statistics and a diagnostic note.
    """
    if reps < 1:
        raise ValueError("need reps >= 1")
    especs = list(estimators)
    labels = [e.label for e in especs]
    if len(set(labels)) != len(labels):
        raise ValueError("estimator labels must be unique")
    rows = []
    for p, (n, N) in enumerate(grid):
        n, N = int(n), int(N)
        model, spec = recipe.build(N, p)
        if nu > model.rank:
            raise ValueError("nu=%d exceeds the model rank %d" % (nu, model.rank))
        truth = model.theta[:, nu - 1]
        cov_exact = model.matrix() if noiseless else None

        def run_rep(i):
            out = {}
            if noiseless:
                data = None
            else:
                rng = replication_rng(master_seed, p, i)
                data = sample_dataset(model, n, rng).observations
            for espec in especs:
                status, column = _estimate_column(
                    espec, model, n, N, nu, data, cov_exact)
                out[espec.label] = (status,
                                    alignment_loss(column, truth)
                                    if status == "ok" else math.nan)
            return out

        if threads > 1:
            with ThreadPoolExecutor(max_workers=int(threads)) as pool:
                outcomes = list(pool.map(run_rep, range(reps)))
        else:
            outcomes = [run_rep(i) for i in range(reps)]

        for espec in especs:
            statuses = [outcomes[i][espec.label] for i in range(reps)]
            losses = np.array([l for s, l in statuses if s == "ok"])
            failed = reps - losses.size
            theory = _theory_value(espec, recipe, n, N, nu)
            seed_record = "%d/%d" % (master_seed, p)
            if failed > abort_fraction * reps:
                rows.append(RiskRow(
                    estimator=espec.label, n=n, N=N, nu=nu, reps=reps,
                    reps_used=int(losses.size), reps_failed=int(failed),
                    mean_loss=math.nan, median_loss=math.nan,
                    std_error=math.nan, theory=theory, aborted=True,
                    seed=seed_record,
                    note="aborted: %d/%d replications failed" % (failed, reps)))
                continue
            se = (float(np.std(losses, ddof=1) / math.sqrt(losses.size))
                  if losses.size > 1 else math.nan)
            rows.append(RiskRow(
                estimator=espec.label, n=n, N=N, nu=nu, reps=reps,
                reps_used=int(losses.size), reps_failed=int(failed),
                mean_loss=float(np.mean(losses)),
                median_loss=float(np.median(losses)),
                std_error=se, theory=theory, aborted=False,
                seed=seed_record))
    config = config_record if config_record is not None else {
        "recipe": recipe.to_dict(),
        "grid": [[int(a), int(b)] for a, b in grid],
        "nu": int(nu),
        "reps": int(reps),
        "noiseless": bool(noiseless),
        "estimators": [e.label for e in especs],
    }
    return RiskReport(config=config, master_seed=int(master_seed), rows=rows)


def _theory_value(espec, recipe, n, N, nu):
    lam = list(recipe.lambdas)
    if espec.name == "opca":
        return opca_risk(n, N, lam, nu)
    breakdown = aspca_rate(n, N, recipe.q, recipe.radii, lam, nu,
                           gamma2_plus=1.5 * espec.config.gamma2,
                           gamma2_minus=0.5 * espec.config.gamma2)
    return breakdown.total


def rate_regression(rows, predictor, estimator=None, lambdas=None, nu=1, q=None):
    """OLS slope of log(mean loss) against log(predictor) over report rows.

    ``predictor`` is 'theory', 'N_over_nh' (needs lambdas), 'sparse_rate'
    (needs lambdas and q), or an explicit sequence matching the filtered
    rows.  Rows with nonpositive or non-finite losses are excluded (the
    count is reported); at least 4 usable points are required.
    """
    picked = [r for r in rows if estimator is None or r.estimator == estimator]
    if isinstance(predictor, str):
        name = predictor
        xs = [_predictor_value(name, r, lambdas, nu, q) for r in picked]
    else:
        name = "explicit"
        xs = [float(v) for v in predictor]
        if len(xs) != len(picked):
            raise ValueError("predictor length does not match the filtered rows")
    pairs = [(x, r.mean_loss) for x, r in zip(xs, picked)
             if x > 0 and math.isfinite(x)
             and r.mean_loss > 0 and math.isfinite(r.mean_loss)]
    excluded = len(picked) - len(pairs)
    if len(pairs) < 4:
        raise ValueError("need at least 4 usable points, have %d" % len(pairs))
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    slope = float(np.sum((lx - lx.mean()) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    dof = len(pairs) - 2
    stderr = (math.sqrt(float(np.sum(resid ** 2)) / dof / sxx)
              if dof > 0 else math.nan)
    return SlopeFit(estimator=estimator or "all", predictor=name,
                    slope=slope, intercept=intercept, stderr=stderr,
                    n_points=len(pairs), n_excluded=excluded)


def _predictor_value(name, row, lambdas, nu, q):
    if name == "theory":
        return float(row.theory)
    if name == "N_over_nh":
        if lambdas is None:
            raise ValueError("predictor 'N_over_nh' needs lambdas")
        return row.N / (row.n * signal_strength(lambdas[nu - 1]))
    if name == "sparse_rate":
        if lambdas is None or q is None:
            raise ValueError("predictor 'sparse_rate' needs lambdas and q")
        h = signal_strength(lambdas[nu - 1])
        return (math.log(max(row.n, row.N)) / (row.n * h)) ** (1.0 - q / 2.0)
    raise ValueError("unknown predictor %r" % name)


@dataclass
class BracketReport:
    """Frequencies with which the selected set honors its theoretical bracket."""

    stage: int
    reps: int
    lower_rate: float      # P(I_minus subset of selected)
    upper_rate: float      # P(selected subset of I_plus)
    both_rate: float
    i_minus: tuple
    i_plus: tuple
    seed: str
    details: dict = field(default_factory=dict)


def selection_bracketing(model, n, reps, master_seed, stage=1, config=None,
                         a_plus=1.75, a_minus=0.25,
                         gamma2_plus=None, gamma2_minus=None):
    """Monte Carlo check that selection stays inside its theoretical bracket.

    Stage 1 brackets the variance-screened set between the population sets
    I~ = {k : zeta_k > a * gamma1 sqrt(log(n v N)/n)} at a = a_plus (inner)
    and a = a_minus (outer), where zeta_k = sum_nu lambda_nu theta_nu,k^2;
    the multipliers must satisfy a_plus > 1 + 1/sqrt(2) and
    0 <= a_minus < 1 - 1/sqrt(2).  Stage 2 brackets the union of both
    selection stages using zeta~_k = sum_nu h(lambda_nu) theta_nu,k^2
    against thresholds gamma2_-^2 log(n v N)/n (outer) and gamma2_+^2
    log(n v N)/n (inner).
    """
    cfg = config or EstimatorConfig()
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    N = model.ambient_dim
    logf = math.log(max(n, N))
    root = math.sqrt(logf / n)
    if stage == 1:
        if not a_plus > 1.0 + 1.0 / math.sqrt(2.0):
            raise ValueError("a_plus must exceed 1 + 1/sqrt(2)")
        if not 0.0 <= a_minus < 1.0 - 1.0 / math.sqrt(2.0):
            raise ValueError("a_minus must lie in [0, 1 - 1/sqrt(2))")
        zeta = (model.theta ** 2) @ model.lambdas
        i_minus = np.flatnonzero(zeta > a_plus * cfg.gamma1 * root)
        i_plus = np.flatnonzero(zeta > a_minus * cfg.gamma1 * root)
        thresholds = {"a_plus": a_plus, "a_minus": a_minus,
                      "gamma1": cfg.gamma1}
    else:
        g2p = 1.5 * cfg.gamma2 if gamma2_plus is None else float(gamma2_plus)
        g2m = 0.5 * cfg.gamma2 if gamma2_minus is None else float(gamma2_minus)
        if not 0 < g2m < cfg.gamma2 < g2p:
            raise ValueError("need 0 < gamma2_minus < gamma2 < gamma2_plus")
        h_vals = np.array([signal_strength(l) for l in model.lambdas])
        zeta_t = (model.theta ** 2) @ h_vals
        i_minus = np.flatnonzero(zeta_t > g2p * g2p * logf / n)
        i_plus = np.flatnonzero(zeta_t > g2m * g2m * logf / n)
        thresholds = {"gamma2_plus": g2p, "gamma2_minus": g2m,
                      "gamma2": cfg.gamma2}
    need = frozenset(int(k) for k in i_minus)
    allow = frozenset(int(k) for k in i_plus)

    lower_hits = upper_hits = both_hits = 0
    for i in range(reps):
        rng = replication_rng(master_seed, stage, i)
        data = sample_dataset(model, n, rng).observations
        result = aspca(data=data, config=cfg)
        if stage == 1:
            selected = frozenset(int(k) for k in result.stage1_support)
        else:
            selected = frozenset(int(k) for k in result.stage1_support) \
                | frozenset(int(k) for k in result.stage2_support)
        lower = need <= selected
        upper = selected <= allow
        lower_hits += lower
        upper_hits += upper
        both_hits += lower and upper
    return BracketReport(
        stage=stage, reps=reps,
        lower_rate=lower_hits / reps,
        upper_rate=upper_hits / reps,
        both_rate=both_hits / reps,
        i_minus=tuple(int(k) for k in i_minus),
        i_plus=tuple(int(k) for k in i_plus),
        seed="%d/%d" % (master_seed, stage),
        details=thresholds,
    )


@dataclass
class ConcentrationCheck:
    """Empirical tail frequency of one event next to its closed-form bound."""

    kind: str
    params: dict
    reps: int
    threshold: float
    bound: float
    empirical: float
    std_error: float
    holds: bool          # empirical <= bound + 3 standard errors
    seed: str


# full batches are always generated and truncated, so growing reps never
# changes the draws already counted
_SCALAR_BATCH = 8192
_MATRIX_BATCH = 512


def concentration_mc(kind, params, reps, master_seed):
    """Estimate the probability of a tail event against its closed-form bound.

    Raises on out-of-domain parameters (the evaluation-grid behavior of
    ``tail_bound`` tolerates them; a Monte Carlo run on them is a bug).
    """
    bound = tail_bound(kind, **params)
    if not bound.in_domain:
        raise ValueError("parameters %r are outside the domain of %r"
                         % (params, kind))
    batch = _SCALAR_BATCH if kind.startswith("chi2") or kind == "cross_product" \
        else _MATRIX_BATCH
    hits = 0
    done = 0
    batch_index = 0
    while done < reps:
        take = min(batch, reps - done)
        rng = np.random.default_rng(
            np.random.SeedSequence(int(master_seed), spawn_key=(batch_index,)))
        events = _tail_events(kind, params, bound.threshold, batch, rng)
        hits += int(np.sum(events[:take]))
        done += take
        batch_index += 1
    emp = hits / reps
    se = math.sqrt(emp * (1.0 - emp) / reps)
    return ConcentrationCheck(
        kind=kind, params=dict(params), reps=int(reps),
        threshold=float(bound.threshold), bound=float(bound.value),
        empirical=float(emp), std_error=float(se),
        holds=bool(emp <= bound.value + 3.0 * se),
        seed=str(int(master_seed)),
    )


def _tail_events(kind, params, threshold, batch, rng):
    if kind in ("chi2_upper", "chi2_upper_poly"):
        x = rng.chisquare(int(params["n"]), batch)
        return x > threshold
    if kind == "chi2_lower":
        x = rng.chisquare(int(params["n"]), batch)
        return x < threshold
    if kind == "cross_product":
        n = int(params["n"])
        y1 = rng.standard_normal((batch, n))
        y2 = rng.standard_normal((batch, n))
        means = np.einsum("ij,ij->i", y1, y2) / n
        return np.abs(means) > threshold
    if kind == "operator_norm":
        n, N = int(params["n"]), int(params["dim"])
        Z = rng.standard_normal((batch, N, n))
        s = np.linalg.svd(Z, compute_uv=False)
        lam_max = s[:, 0] ** 2 / n
        lam_min = (s[:, -1] ** 2 / n) if N <= n else np.zeros(batch)
        norm = np.maximum(lam_max - 1.0, 1.0 - lam_min)
        return norm > threshold
    if kind in ("singular_max", "singular_min"):
        p, qq = int(params["p"]), int(params["q"])
        Z = rng.standard_normal((batch, p, qq))
        s = np.linalg.svd(Z, compute_uv=False) / math.sqrt(qq)
        return (s[:, 0] > threshold) if kind == "singular_max" \
            else (s[:, -1] < threshold)
    if kind in ("eigen_max", "eigen_min"):
        p, qq = int(params["p"]), int(params["q"])
        Z = rng.standard_normal((batch, p, qq))
        s = np.linalg.svd(Z, compute_uv=False)
        lam = s ** 2 / qq
        return (lam[:, 0] > threshold) if kind == "eigen_max" \
            else (lam[:, -1] < threshold)
    raise ValueError("no sampler for kind %r" % kind)


@dataclass
class FirstOrderReport:
    """Monte Carlo audit of the first-order eigenvector expansion."""

    n: int
    nu: int
    reps: int
    mc_mean: float         # mean ||H_nu S theta_nu||^2
    exact_mean: float      # closed-form expectation
    ratio: float
    mean_loss: float
    sandwich_rate: float   # fraction of reps inside the (1 +- 3 delta-bar)^2 sandwich
    mean_delta_bar: float
    seed: str


def first_order_validation(model, n, nu, reps, master_seed):
    """Check E||H_nu S theta_nu||^2 and the loss sandwich replication by replication.

    Requires sigma2 = 1 (the closed form assumes unit noise).  Each
    replication computes the realized first-order term, the ordinary-PCA
    loss, and delta_bar = ||S - Sigma|| / gap; the sandwich test asks
    ||H S theta||^2 (1 - 3 delta_bar)^2 <= L <= ||H S theta||^2 (1 + 3 delta_bar)^2.
    """
    if abs(model.sigma2 - 1.0) > 1e-12:
        raise ValueError("the closed-form expectation assumes sigma2 = 1")
    N, M = model.ambient_dim, model.rank
    if not 1 <= nu <= M:
        raise ValueError("spike index nu=%r out of range 1..%d" % (nu, M))
    H = influence_operator(model, nu)
    theta_nu = model.theta[:, nu - 1]
    Sigma = model.matrix()
    spectrum = np.concatenate([model.lambdas + 1.0, np.ones(N - M)])
    lam_r = model.lambdas[nu - 1] + 1.0
    gap = float(np.min(np.abs(np.delete(spectrum, nu - 1) - lam_r)))

    hs2_values = np.empty(reps)
    losses = np.empty(reps)
    delta_bars = np.empty(reps)
    sandwich_hits = 0
    for i in range(reps):
        rng = replication_rng(master_seed, 0, i)
        X = sample_dataset(model, n, rng).observations
        w = X @ theta_nu
        hs = H @ (X.T @ w) / n
        hs2 = float(hs @ hs)
        S = X.T @ X / n
        # eigh is ascending: the nu-th largest eigenvector is column -nu
        _, vecs = np.linalg.eigh(S)
        loss = alignment_loss(vecs[:, -nu], theta_nu)
        dbar = float(np.max(np.abs(np.linalg.eigvalsh(S - Sigma)))) / gap
        hs2_values[i] = hs2
        losses[i] = loss
        delta_bars[i] = dbar
        blow = 3.0 * dbar
        lower = hs2 * (1.0 - blow) ** 2 if blow < 1.0 else 0.0
        upper = hs2 * (1.0 + blow) ** 2
        sandwich_hits += lower <= loss <= upper
    exact = opca_risk(n, N, model.lambdas, nu)
    mc_mean = float(np.mean(hs2_values))
    return FirstOrderReport(
        n=int(n), nu=int(nu), reps=int(reps),
        mc_mean=mc_mean, exact_mean=float(exact),
        ratio=mc_mean / exact,
        mean_loss=float(np.mean(losses)),
        sandwich_rate=sandwich_hits / reps,
        mean_delta_bar=float(np.mean(delta_bars)),
        seed=str(int(master_seed)),
    )
