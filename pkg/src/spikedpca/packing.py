"""Packing constructions that certify minimax lower bounds.

Three families of spiked-model frames realize the lower-bound argument:
a single-coordinate family rotating one spike toward each free axis, a
polar-sphere family spreading the spike over a sign-vector packing of an
m-dimensional sphere (one variant per rate regime), and an orthogonal
two-point family twisting a pair of spikes into each other.  Each family
records its separation radius, the Kullback-Leibler divergences to the
base point, and the certified pairwise loss floor that feeds Fano's
inequality.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import kl_spiked
from .model import InfeasibleSpecError
from .rates import C1_PACKING, pair_separation, signal_strength


class InfeasibleRegimeError(InfeasibleSpecError):
    """The requested packing cannot be realized at these parameters."""


def _entropy(x):
    # natural-log binary entropy, defined on (0, 1)
    return -x * math.log(x) - (1.0 - x) * math.log(1.0 - x)


@dataclass
class SignPacking:
    """1-separated packing of sparse sign vectors on the unit m-sphere."""

    m: int
    m0: int
    vectors: np.ndarray          # (count, m), rows are unit vectors
    count: int
    exhaustive: bool             # whole candidate list was scanned
    candidates_scanned: int
    asymptotic_floor_log: float  # (m/2) log(9/8); logged, never asserted


def sign_vector_packing(m, max_candidates=50000):
    """Greedily pack m0-sparse sign vectors at pairwise distance >= 1.

    Vectors carry exactly m0 = floor(2m/9) entries of +-1/sqrt(m0), so
    ||z - z'|| >= 1 is the inner-product condition <z, z'> <= 1/2.
    Candidates are scanned in lexicographic order (supports ascending,
    then sign patterns with + before -) and kept greedily; scanning stops
    after ``max_candidates`` candidates, which keeps m = 9 (144 candidates,
    all kept) exhaustive while larger m yield a deterministic prefix.
    """
    m = int(m)
    m0 = (2 * m) // 9
    if m0 < 1:
        raise InfeasibleRegimeError("need m >= 5 so that floor(2m/9) >= 1")
    if max_candidates < 1:
        raise ValueError("max_candidates must be positive")
    inv = 1.0 / math.sqrt(m0)
    buf = np.zeros((max_candidates, m))
    count = 0
    scanned = 0
    truncated = False
    for support in itertools.combinations(range(m), m0):
        if truncated:
            break
        sup = list(support)
        for signs in itertools.product((1.0, -1.0), repeat=m0):
            if scanned >= max_candidates:
                truncated = True
                break
            scanned += 1
            svec = np.asarray(signs) * inv
            if count:
                dots = buf[:count, sup] @ svec
                if float(np.max(dots)) > 0.5 + 1e-9:
                    continue
            buf[count, sup] = svec
            count += 1
    return SignPacking(
        m=m, m0=m0,
        vectors=buf[:count].copy(),
        count=count,
        exhaustive=not truncated,
        candidates_scanned=scanned,
        asymptotic_floor_log=0.5 * m * C1_PACKING,
    )


@dataclass
class SupportPacking:
    """Family of m-subsets of a coordinate pool with bounded pairwise overlap."""

    n_pool: int
    m: int
    max_overlap: int
    supports: tuple              # tuple of sorted index tuples
    count: int
    exhaustive: bool
    candidates_scanned: int
    asymptotic_floor_log: float  # N E(m/(9N)) - 2m E(1/9); None if undefined


def support_packing(n_pool, m, max_overlap, max_candidates=50000):
    """Greedy family of m-subsets with pairwise intersection <= max_overlap.

    When the pool has at most ``max_candidates`` subsets they are all scanned
    in lexicographic order (the family is then greedily maximal).  Larger
    pools get the systematic disjoint blocks (0..m-1), (m..2m-1), ... first,
    followed by seed-0 random subsets until the scan budget runs out; a
    lexicographic prefix would be useless there because its candidates all
    share their leading coordinates.  The logged floor is the counting bound
    exp(N E(m/9N) - 2m E(1/9)) on the maximal family size.
    """
    n_pool, m = int(n_pool), int(m)
    if not 1 <= m <= n_pool:
        raise ValueError("need 1 <= m <= n_pool")
    if max_overlap < 0:
        raise ValueError("max_overlap must be nonnegative")
    if max_candidates < 1:
        raise ValueError("max_candidates must be positive")
    x = m / (9.0 * n_pool)
    floor_log = (n_pool * _entropy(x) - 2.0 * m * _entropy(1.0 / 9.0)
                 if 0.0 < x < 1.0 else None)
    incidence = np.zeros((max_candidates, n_pool), dtype=np.uint8)
    kept = []
    scanned = 0

    def consider(combo):
        sup = list(combo)
        if kept:
            overlaps = incidence[:len(kept), sup].sum(axis=1)
            if int(overlaps.max()) > max_overlap:
                return
        incidence[len(kept), sup] = 1
        kept.append(tuple(combo))

    exhaustive = math.comb(n_pool, m) <= max_candidates
    if exhaustive:
        for combo in itertools.combinations(range(n_pool), m):
            scanned += 1
            consider(combo)
    else:
        seen = set()
        for start in range(0, n_pool - m + 1, m):
            if scanned >= max_candidates:
                break
            combo = tuple(range(start, start + m))
            seen.add(combo)
            scanned += 1
            consider(combo)
        rng = np.random.default_rng(0)
        while scanned < max_candidates:
            scanned += 1
            combo = tuple(np.sort(rng.choice(n_pool, m, replace=False)).tolist())
            if combo in seen:
                continue
            seen.add(combo)
            consider(combo)
    return SupportPacking(
        n_pool=n_pool, m=m, max_overlap=int(max_overlap),
        supports=tuple(kept),
        count=len(kept),
        exhaustive=exhaustive,
        candidates_scanned=scanned,
        asymptotic_floor_log=floor_log,
    )


@dataclass
class PackingFamily:
    """A finite set of spiked-model frames around a base point."""

    kind: str                 # 'single-coordinate' | 'polar-sphere' | 'two-point'
    nu: int
    members: list             # (N, M) frames
    base_point: np.ndarray    # (N, M) reference frame
    radius: float             # separation radius r
    sphere_dim: int           # m (1 for the non-sphere families)
    sign_support: int         # m0; 0 when not applicable
    loss_floor: float         # certified minimum pairwise alignment loss
    min_pairwise_loss: float  # realized minimum (computed exactly)
    regime: str = None
    n: int = None
    lambdas: np.ndarray = None
    kl_to_base: np.ndarray = None   # member -> base divergences when n known
    expected_kl: float = None       # (1/2) n h(lambda_nu) r^2 for polar families
    details: dict = field(default_factory=dict)

    @property
    def cardinality(self):
        return len(self.members)

    def kl_values(self, lambdas, n):
        """K(member_j || base) for every member at the given spikes and n."""
        return np.array([
            kl_spiked(th, self.base_point, lambdas, n) for th in self.members
        ])


def _standard_frame(N, M):
    base = np.zeros((N, M))
    base[np.arange(M), np.arange(M)] = 1.0
    return base


def _min_pairwise_loss(members, nu, block=256):
    """Exact min over pairs of 2(1 - |<col_nu, col_nu'>|), blockwise."""
    cols = np.stack([np.asarray(th)[:, nu - 1] for th in members])
    J = cols.shape[0]
    if J < 2:
        return math.nan
    best = -1.0
    for start in range(0, J, block):
        chunk = cols[start:start + block]
        gram = np.abs(chunk @ cols.T)
        for i in range(chunk.shape[0]):
            gram[i, start + i] = -np.inf
        best = max(best, float(gram.max()))
    return 2.0 * (1.0 - min(best, 1.0))


def _check_family_inputs(N, M, nu, q=None, radii=None):
    if not (1 <= M < N):
        raise ValueError("need 1 <= M < N")
    if not (1 <= nu <= M):
        raise ValueError("spike index nu=%r out of range 1..%d" % (nu, M))
    if q is not None and not 0 < q < 2:
        raise ValueError("q must lie in (0, 2)")
    if radii is not None:
        radii = np.asarray(radii, dtype=float).ravel()
        if radii.size != M or np.any(radii < 1):
            raise ValueError("need one lq radius >= 1 per spike")
    return radii


def _largest_feasible_radius(q, Cq, tol=1e-12):
    """Largest r <= 0.999 with (1 - r^2)^(q/2) + r^q <= Cq (given Cq > 1).

    The budget rises from 1 at r = 0 to 2^(1-q/2) at r = sqrt(1/2), then
    falls; so either r = 0.999 already fits, or the answer is the first
    crossing on the rising branch.
    """
    def budget(r):
        return (1.0 - r * r) ** (q / 2.0) + r ** q

    if budget(0.999) <= Cq:
        return 0.999
    lo, hi = 0.0, math.sqrt(0.5)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if budget(mid) < Cq:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def single_coordinate_family(N, M, nu, q, radii):
    """Frames rotating spike nu by a fixed angle toward each free axis.

    Member j (one per coordinate j = M+1..N) replaces column nu by
    sqrt(1-r^2) e_nu + r e_j with the largest budget-feasible r (capped at
    0.999); every pair is exactly 2 r^2 apart in alignment loss.
    """
    radii = _check_family_inputs(N, M, nu, q, radii)
    if N < M + 2:
        raise InfeasibleRegimeError("need N >= M + 2 for at least two members")
    Cq = float(radii[nu - 1]) ** q
    if Cq <= 1.0 + 1e-12:
        raise InfeasibleRegimeError(
            "lq radius of spike %d must exceed 1 to rotate it" % nu)
    r = _largest_feasible_radius(q, Cq)
    base = _standard_frame(N, M)
    members = []
    for j in range(M, N):
        th = base.copy()
        th[:, nu - 1] = 0.0
        th[nu - 1, nu - 1] = math.sqrt(1.0 - r * r)
        th[j, nu - 1] = r
        members.append(th)
    mass = (1.0 - r * r) ** (q / 2.0) + r ** q
    if mass > Cq * (1.0 + 1e-9):
        raise AssertionError("member violates the lq budget: %g > %g" % (mass, Cq))
    return PackingFamily(
        kind="single-coordinate", nu=nu,
        members=members, base_point=base,
        radius=r, sphere_dim=1, sign_support=0,
        loss_floor=2.0 * r * r,
        min_pairwise_loss=_min_pairwise_loss(members, nu),
        details={"q": q, "C_nu_q": Cq, "lq_mass": mass},
    )


def polar_sphere_family(n, N, M, nu, lambdas, q, radii, regime,
                        alpha=None, max_candidates=50000, max_members=5000):
    """Spread spike nu over a packed sphere at the regime's polar radius.

    Regimes set the sphere dimension m and squared radius r^2 (with
    h = h(lambda_nu), c1 = log(9/8), Cbar^q = C_nu^q - 1):

      'bounded-below'       m = floor(n h),   r^2 = c1
      'N-dominated'         m = N - M,        r^2 = c1 (N-M)/(n h)
      'sparsity-dominated'  m = floor(c1^(-q/2) (9/2)^(1-q/2) Cbar^q (n h)^(q/2))
                            r^2 = c1 m/(n h)
      'log-sparse'          m = floor((alpha/9)^(-q/2) (9/2)^(1-q/2) Cbar^q
                                      (n h)^(q/2) (log N)^(-q/2))
                            r^2 = (alpha/9) m log(N)/(n h),  alpha in (0, 1)

    Members put the sign-packing vectors on coordinates M+1..M+m; the
    log-sparse regime additionally varies the support over a family of
    m-subsets with pairwise overlap <= floor(m0/2), multiplying the
    cardinality.  Every member is exactly (1/2) n h r^2 from the base in
    Kullback-Leibler divergence, and pairwise losses are >= r^2.
    Regimes whose m or r leave the feasible range raise
    InfeasibleRegimeError, as do members failing the lq budget (meaning the
    requested regime's defining condition does not hold here).
    """
    radii = _check_family_inputs(N, M, nu, q, radii)
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size != M or np.any(lam <= 0):
        raise ValueError("need M positive spike sizes")
    if M > 1 and not np.all(np.diff(lam) < 0):
        raise ValueError("spike sizes must be strictly decreasing")
    if n < 1:
        raise ValueError("need n >= 1")
    h = signal_strength(lam[nu - 1])
    nh = n * h
    Cbar_q = float(radii[nu - 1]) ** q - 1.0
    if Cbar_q <= 0:
        raise InfeasibleRegimeError("lq radius of spike %d must exceed 1" % nu)
    expo = 1.0 - q / 2.0
    logN = math.log(N)
    if regime == "bounded-below":
        m = int(math.floor(nh))
        r2 = C1_PACKING
    elif regime == "N-dominated":
        m = N - M
        r2 = C1_PACKING * (N - M) / nh
    elif regime == "sparsity-dominated":
        m = int(math.floor(
            C1_PACKING ** (-q / 2.0) * 4.5 ** expo * Cbar_q * nh ** (q / 2.0)))
        r2 = C1_PACKING * m / nh
    elif regime == "log-sparse":
        if alpha is None or not 0 < alpha < 1:
            raise ValueError("log-sparse regime needs alpha in (0, 1)")
        if N < 3:
            raise InfeasibleRegimeError("log-sparse regime needs N >= 3")
        m = int(math.floor(
            (alpha / 9.0) ** (-q / 2.0) * 4.5 ** expo * Cbar_q
            * nh ** (q / 2.0) * logN ** (-q / 2.0)))
        r2 = (alpha / 9.0) * m * logN / nh
    else:
        raise ValueError("unknown regime %r" % regime)

    if m < 5:
        raise InfeasibleRegimeError(
            "regime %r yields sphere dimension m=%d < 5" % (regime, m))
    if M + m > N:
        raise InfeasibleRegimeError(
            "regime %r needs %d coordinates but only %d are free"
            % (regime, m, N - M))
    if not 0.0 < r2 < 1.0:
        raise InfeasibleRegimeError(
            "regime %r yields squared radius %g outside (0, 1)" % (regime, r2))
    r = math.sqrt(r2)

    signs = sign_vector_packing(m, max_candidates)
    base = _standard_frame(N, M)
    members = []
    truncated = False
    if regime == "log-sparse":
        supports = support_packing(N - M, m, signs.m0 // 2, max_candidates)
        support_iter = [np.asarray(sup, dtype=int) + M for sup in supports.supports]
    else:
        supports = None
        support_iter = [np.arange(M, M + m)]
    for sup in support_iter:
        if truncated:
            break
        for z in signs.vectors:
            if len(members) >= max_members:
                truncated = True
                break
            th = base.copy()
            th[:, nu - 1] = 0.0
            th[nu - 1, nu - 1] = math.sqrt(1.0 - r2)
            th[sup, nu - 1] = r * z
            members.append(th)

    mass = (1.0 - r2) ** (q / 2.0) + signs.m0 ** expo * r ** q
    Cq = Cbar_q + 1.0
    if mass > Cq * (1.0 + 1e-9):
        raise InfeasibleRegimeError(
            "members exceed the lq budget (%g > %g); the %r condition does "
            "not hold at these parameters" % (mass, Cq, regime))

    fam = PackingFamily(
        kind="polar-sphere", nu=nu,
        members=members, base_point=base,
        radius=r, sphere_dim=m, sign_support=signs.m0,
        loss_floor=r2,
        min_pairwise_loss=_min_pairwise_loss(members, nu),
        regime=regime, n=int(n), lambdas=lam,
        expected_kl=0.5 * nh * r2,
        details={
            "q": q, "lq_mass": mass, "C_nu_q": Cq,
            "sign_count": signs.count,
            "sign_exhaustive": signs.exhaustive,
            "support_count": supports.count if supports else 1,
            "support_exhaustive": supports.exhaustive if supports else True,
            "truncated": truncated,
            "alpha": alpha,
        },
    )
    fam.kl_to_base = fam.kl_values(lam, n)
    return fam


def two_point_family(n, N, M, nu, mu, lambdas):
    """Orthogonal two-point twist of spikes nu and mu at radius 2/(n g).

    theta^(1) is the standard frame; theta^(2) rotates columns nu and mu
    by the angle with sin = r inside their common plane, keeping exact
    orthogonality.  The symmetric Kullback-Leibler sum equals n g r^2.
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    M = int(M)
    _check_family_inputs(N, M, nu)
    if M < 2:
        raise ValueError("two-point family needs at least two spikes")
    if not (1 <= mu <= M) or mu == nu:
        raise ValueError("need distinct spike indices nu and mu in 1..%d" % M)
    if lam.size != M or np.any(lam <= 0) or not np.all(np.diff(lam) < 0):
        raise ValueError("need M strictly decreasing positive spike sizes")
    if n < 1:
        raise ValueError("need n >= 1")
    g = pair_separation(lam[mu - 1], lam[nu - 1])
    r2 = 2.0 / (n * g)
    if not r2 < 1.0:
        raise InfeasibleRegimeError(
            "n g(lambda_mu, lambda_nu) = %g is too small for a radius below 1"
            % (n * g))
    r = math.sqrt(r2)
    root = math.sqrt(1.0 - r2)
    first = _standard_frame(N, M)
    second = first.copy()
    second[:, nu - 1] = 0.0
    second[nu - 1, nu - 1] = root
    second[mu - 1, nu - 1] = r
    second[:, mu - 1] = 0.0
    second[nu - 1, mu - 1] = -r
    second[mu - 1, mu - 1] = root
    members = [first, second]
    fam = PackingFamily(
        kind="two-point", nu=nu,
        members=members, base_point=first,
        radius=r, sphere_dim=1, sign_support=0,
        loss_floor=r2,
        min_pairwise_loss=_min_pairwise_loss(members, nu),
        n=int(n), lambdas=lam,
        details={"mu": mu, "g": g, "sym_kl_expected": n * g * r2},
    )
    fam.kl_to_base = fam.kl_values(lam, n)
    return fam


def fano_bound(family, lambdas, n, delta):
    """Fano / two-point risk lower bound over a packing family.

    With more than two members: delta * max(0, 1 - (avg KL + log 2)/log J)
    where the average runs over member-to-base divergences.  With exactly
    two: delta/4 * exp(-(K12 + K21)/2).  The result always lies in
    [0, delta]; ``delta`` is the distinguishability level the caller
    certifies (e.g. a quarter of the pairwise loss floor).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    members = family.members
    J = len(members)
    if J < 2:
        raise ValueError("need at least two members")
    if J == 2:
        k12 = kl_spiked(members[0], members[1], lambdas, n)
        k21 = kl_spiked(members[1], members[0], lambdas, n)
        value = 0.25 * delta * math.exp(-0.5 * (k12 + k21))
    else:
        kls = family.kl_values(lambdas, n)
        value = delta * max(0.0, 1.0 - (float(np.mean(kls)) + math.log(2.0))
                            / math.log(J))
    return float(min(max(value, 0.0), delta))
