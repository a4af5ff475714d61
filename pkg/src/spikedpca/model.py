"""Spiked covariance models over lq-sparse orthonormal frames.

A model is Sigma = sum_nu lambda_nu theta_nu theta_nu' + sigma^2 I with
strictly decreasing positive spikes and orthonormal columns theta_nu; the
sparsity class constrains each column to an lq ball (0 < q < 2) of radius
C_nu >= 1.  Sampling keeps the factor scores so oracle quantities can be
reconstructed rep by rep.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class InfeasibleSpecError(ValueError):
    """The requested configuration cannot be realized inside the lq ball."""


class RetryExhaustedError(RuntimeError):
    """Random draws kept violating the lq budget."""


@dataclass
class LqSpaceSpec:
    """Parameter space of ``rank`` orthonormal columns in dimension ``ambient_dim``.

    Column nu must satisfy sum_k |theta_k|^q <= radii[nu]^q; radii below 1
    are infeasible because a unit vector always has lq norm >= 1.
    """

    q: float
    radii: tuple
    ambient_dim: int
    rank: int

    def __post_init__(self):
        if not 0 < self.q < 2:
            raise ValueError("q must lie in (0, 2)")
        self.radii = tuple(float(c) for c in np.atleast_1d(self.radii))
        if any(c < 1.0 for c in self.radii):
            raise InfeasibleSpecError("every lq radius must be >= 1")
        if not (1 <= self.rank < self.ambient_dim):
            raise ValueError("need 1 <= rank < ambient_dim")
        if len(self.radii) != self.rank:
            raise ValueError("need one radius per column")


@dataclass
class SpikedCovariance:
    """Sigma = theta diag(lambdas) theta' + sigma2 I with validated frame."""

    lambdas: np.ndarray
    theta: np.ndarray
    sigma2: float = 1.0

    @property
    def ambient_dim(self):
        return self.theta.shape[0]

    @property
    def rank(self):
        return self.theta.shape[1]

    def matrix(self):
        """Materialize Sigma as a dense (N, N) array."""
        return (self.theta * self.lambdas) @ self.theta.T \
            + self.sigma2 * np.eye(self.ambient_dim)


def build_covariance(lambdas, theta, sigma2=1.0):
    """Validate and assemble a spiked covariance model.

    Requires strictly decreasing positive spikes, Gram residual of the
    frame below 1e-8, and sigma2 > 0.
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2:
        raise ValueError("theta must be an (N, M) array of columns")
    N, M = theta.shape
    if lam.size != M:
        raise ValueError("need one spike size per column")
    if M < 1 or N <= M:
        raise ValueError("need 1 <= M < N")
    if np.any(lam <= 0):
        raise ValueError("spike sizes must be positive")
    if M > 1 and not np.all(np.diff(lam) < 0):
        raise ValueError("spike sizes must be strictly decreasing")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    gram = theta.T @ theta
    resid = float(np.max(np.abs(gram - np.eye(M))))
    if resid > 1e-8:
        raise ValueError("theta columns not orthonormal (Gram residual %g)" % resid)
    return SpikedCovariance(lambdas=lam.copy(), theta=theta.copy(), sigma2=float(sigma2))


@dataclass
class Dataset:
    """n observations in rows, plus the factor scores that generated them."""

    observations: np.ndarray   # (n, N)
    factors: np.ndarray        # (n, M) standardized scores
    noise_seed: str            # record of the stream that produced the draw

    @property
    def n(self):
        return self.observations.shape[0]


def _as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed, "external-generator"
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed), "seedseq:%s/%s" % (seed.entropy, seed.spawn_key)
    return np.random.default_rng(seed), "seed:%r" % (seed,)


def sample_dataset(model, n, seed):
    """Draw n rows X_i = sum_nu sqrt(lambda_nu) v_i,nu theta_nu + sigma Z_i.

    ``seed`` may be an integer, a numpy SeedSequence, or a Generator; the
    stream record lands in the dataset for reproducibility audits.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng, record = _as_generator(seed)
    N, M = model.ambient_dim, model.rank
    factors = rng.standard_normal((n, M))
    noise = rng.standard_normal((n, N))
    X = factors @ (np.sqrt(model.lambdas)[:, None] * model.theta.T) \
        + math.sqrt(model.sigma2) * noise
    return Dataset(observations=X, factors=factors, noise_seed=record)


@dataclass
class MembershipReport:
    """Per-column lq norms of a frame against a space specification."""

    lq_norms: tuple
    column_member: tuple
    gram_residual: float
    member: bool


def membership_report(theta, spec, tol=1e-12):
    """Check a frame against an LqSpaceSpec; norms are reported, not raised."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.ambient_dim, spec.rank):
        raise ValueError("frame shape %r does not match spec (%d, %d)"
                         % (theta.shape, spec.ambient_dim, spec.rank))
    norms = []
    flags = []
    for nu in range(spec.rank):
        mass = float(np.sum(np.abs(theta[:, nu]) ** spec.q))
        norms.append(mass ** (1.0 / spec.q))
        flags.append(mass <= spec.radii[nu] ** spec.q * (1.0 + tol))
    gram = theta.T @ theta
    resid = float(np.max(np.abs(gram - np.eye(spec.rank))))
    return MembershipReport(
        lq_norms=tuple(norms),
        column_member=tuple(flags),
        gram_residual=resid,
        member=bool(all(flags) and resid <= 1e-8),
    )


def _draw_supports(rng, N, sizes, disjoint):
    if disjoint:
        order = rng.permutation(N)
        supports, start = [], 0
        for s in sizes:
            supports.append(np.sort(order[start:start + s]))
            start += s
        return supports
    return [np.sort(rng.choice(N, size=s, replace=False)) for s in sizes]


def make_sparse_basis(spec, support_sizes, seed, disjoint=True,
                      weights="random", max_retries=100):
    """Draw an orthonormal frame with per-column supports inside the lq budget.

    Disjoint supports keep the stated per-column sizes exactly (orthogonality
    is automatic); overlapping supports are orthonormalized by Gram-Schmidt,
    which can only spill within the union of the drawn supports, so only the
    union bound is guaranteed then.  ``weights='equal'`` puts 1/sqrt(s) on
    every support coordinate (disjoint mode only).  Draws violating a budget
    are retried; persistent violation raises RetryExhaustedError, while
    supports that cannot fit at all raise InfeasibleSpecError.
    """
    sizes = [int(s) for s in support_sizes]
    if len(sizes) != spec.rank:
        raise ValueError("need one support size per column")
    if any(s < 1 for s in sizes):
        raise ValueError("support sizes must be >= 1")
    if disjoint and sum(sizes) > spec.ambient_dim:
        raise InfeasibleSpecError("disjoint supports exceed the ambient dimension")
    if max(sizes) > spec.ambient_dim:
        raise InfeasibleSpecError("a support exceeds the ambient dimension")
    for nu, s in enumerate(sizes):
        # a unit vector on s coordinates has lq mass >= 1 with equality only
        # at a single coordinate, so C = 1 forbids any genuine spreading
        if s >= 2 and spec.radii[nu] ** spec.q <= 1.0 + 1e-12:
            raise InfeasibleSpecError(
                "column %d: lq radius %g cannot hold %d nonzero coordinates"
                % (nu + 1, spec.radii[nu], s))
    if weights not in ("random", "equal"):
        raise ValueError("weights must be 'random' or 'equal'")
    if weights == "equal" and not disjoint:
        raise ValueError("equal weights require disjoint supports")

    rng, _ = _as_generator(seed)
    N, M = spec.ambient_dim, spec.rank
    for _ in range(max_retries):
        supports = _draw_supports(rng, N, sizes, disjoint)
        theta = np.zeros((N, M))
        if weights == "equal":
            for nu, sup in enumerate(supports):
                theta[sup, nu] = 1.0 / math.sqrt(sizes[nu])
        else:
            for nu, sup in enumerate(supports):
                theta[sup, nu] = rng.standard_normal(sizes[nu])
            # modified Gram-Schmidt; projections only touch coordinates in
            # the union of the supports drawn so far
            degenerate = False
            for nu in range(M):
                for mu in range(nu):
                    theta[:, nu] -= (theta[:, mu] @ theta[:, nu]) * theta[:, mu]
                nrm = np.linalg.norm(theta[:, nu])
                if nrm < 1e-8:
                    degenerate = True
                    break
                theta[:, nu] /= nrm
            if degenerate:
                continue
        report = membership_report(theta, spec)
        if report.member:
            return theta
    raise RetryExhaustedError(
        "no draw satisfied the lq budgets after %d attempts" % max_retries)


def _encode_theta(theta, sparse_threshold=0.5):
    N, M = theta.shape
    nnz = int(np.count_nonzero(theta))
    if nnz <= sparse_threshold * N * M:
        cols = []
        for nu in range(M):
            idx = np.flatnonzero(theta[:, nu])
            cols.append([[int(k), float(theta[k, nu])] for k in idx])
        return {"encoding": "sparse", "columns": cols}
    return {"encoding": "dense", "values": [float(v) for v in theta.T.ravel()]}


def _decode_theta(doc, N, M):
    if doc["encoding"] == "sparse":
        theta = np.zeros((N, M))
        for nu, col in enumerate(doc["columns"]):
            for k, v in col:
                theta[int(k), nu] = float(v)
        return theta
    values = np.asarray(doc["values"], dtype=float)
    return values.reshape(M, N).T


def model_document(model, spec=None):
    """JSON-ready dict describing a model (and optionally its lq space)."""
    doc = {
        "N": int(model.ambient_dim),
        "M": int(model.rank),
        "lambdas": [float(l) for l in model.lambdas],
        "sigma2": float(model.sigma2),
        "q": float(spec.q) if spec is not None else None,
        "C": [float(c) for c in spec.radii] if spec is not None else None,
        "theta": _encode_theta(model.theta),
    }
    return doc


def model_from_document(doc):
    """Inverse of model_document: returns (model, spec-or-None)."""
    N, M = int(doc["N"]), int(doc["M"])
    theta = _decode_theta(doc["theta"], N, M)
    model = build_covariance(doc["lambdas"], theta, doc.get("sigma2", 1.0))
    spec = None
    if doc.get("q") is not None:
        spec = LqSpaceSpec(q=float(doc["q"]), radii=tuple(doc["C"]),
                           ambient_dim=N, rank=M)
    return model, spec


def save_model(path, model, spec=None):
    """Write a model document; floats survive the round trip bit for bit."""
    with open(path, "w") as fh:
        json.dump(model_document(model, spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_document(json.load(fh))
