"""Sign-invariant eigenvector losses and Kullback-Leibler divergences.

The losses treat an eigenvector and its negation as the same object.  The
KL divergence between two spiked Gaussian models with common spike sizes
has a closed form in the frame inner products; ``kl_gaussian`` is the
generic dense-covariance formula kept as an independent cross-check.
"""

from __future__ import annotations

import math

import numpy as np

from .rates import shrinkage_factor


def _as_unit(v, name):
    arr = np.asarray(v, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("%s is empty" % name)
    nrm = float(np.linalg.norm(arr))
    if nrm == 0.0:
        raise ValueError("%s is the zero vector" % name)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError("%s is not unit length (|norm - 1| = %g)" % (name, abs(nrm - 1.0)))
    return arr / nrm


def alignment_loss(a, b):
    """L(a, b) = 2 (1 - |<a, b>|) = min(||a - b||^2, ||a + b||^2), in [0, 2]."""
    a = _as_unit(a, "a")
    b = _as_unit(b, "b")
    if a.size != b.size:
        raise ValueError("vectors have different lengths")
    inner = min(abs(float(a @ b)), 1.0)
    return 2.0 * (1.0 - inner)


def sine_squared_loss(a, b):
    """L_s(a, b) = 1 - <a, b>^2 = sin^2 of the angle between the lines.

    Related to the alignment loss by L_s = L - L^2 / 4.
    """
    a = _as_unit(a, "a")
    b = _as_unit(b, "b")
    if a.size != b.size:
        raise ValueError("vectors have different lengths")
    inner = min(abs(float(a @ b)), 1.0)
    return 1.0 - inner * inner


def _check_frame(theta, name):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2:
        raise ValueError("%s must be a 2-d array of column vectors" % name)
    gram = theta.T @ theta
    resid = float(np.max(np.abs(gram - np.eye(theta.shape[1]))))
    if resid > 1e-8:
        raise ValueError("%s is not orthonormal (Gram residual %g)" % (name, resid))
    return theta


def kl_spiked(theta1, theta2, lambdas, n):
    """KL divergence between n-sample spiked models sharing spike sizes.

    For N(0, Sigma_i) with Sigma_i = sum_nu lambda_nu theta_nu^(i) theta_nu^(i)' + I:

      K = n [ (1/2) sum_nu eta(lambda_nu) lambda_nu
              - (1/2) sum_nu sum_nu' eta(lambda_nu) lambda_nu'
                <theta_nu'^(1), theta_nu^(2)>^2 ]

    with eta(lam) = lam/(1+lam) paired with the second model's columns.
    When the frames coincide the divergence is 0; a single orthogonal swap
    costs n eta(lam) lam / 2.
    """
    theta1 = _check_frame(theta1, "theta1")
    theta2 = _check_frame(theta2, "theta2")
    if theta1.shape != theta2.shape:
        raise ValueError("frames have different shapes")
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size != theta1.shape[1]:
        raise ValueError("need one spike size per column")
    if np.any(lam <= 0):
        raise ValueError("spike sizes must be positive")
    if n < 1:
        raise ValueError("need n >= 1")
    eta = np.array([shrinkage_factor(l) for l in lam])
    cross = theta1.T @ theta2                      # cross[mu, nu] = <theta1_mu, theta2_nu>
    aligned = (lam[:, None] * cross ** 2).sum(axis=0)   # sum_mu lam_mu <theta1_mu, theta2_nu>^2
    value = 0.5 * n * float(np.sum(eta * (lam - aligned)))
    if value < 0.0:
        # exact value is nonnegative; tolerate rounding at machine scale
        if value < -1e-9 * max(1.0, 0.5 * n * float(np.sum(eta * lam))):
            raise AssertionError("KL evaluated negative: %g" % value)
        value = 0.0
    return value


def kl_gaussian(sigma1, sigma2, n):
    """KL divergence between N(0, sigma1)^n and N(0, sigma2)^n, dense form.

    n/2 [ tr(sigma2^{-1} sigma1) - N + log det sigma2 - log det sigma1 ],
    computed through Cholesky factors so non-positive-definite input fails
    loudly rather than returning garbage.
    """
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if s1.shape != s2.shape or s1.ndim != 2 or s1.shape[0] != s1.shape[1]:
        raise ValueError("covariances must be square matrices of equal shape")
    if n < 1:
        raise ValueError("need n >= 1")
    factors = []
    for name, mat in (("sigma1", s1), ("sigma2", s2)):
        resid = float(np.max(np.abs(mat - mat.T)))
        if resid > 1e-10 * max(1.0, float(np.max(np.abs(mat)))):
            raise ValueError("%s is not symmetric (residual %g)" % (name, resid))
        try:
            L = np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            raise ValueError("%s is not positive definite" % name)
        d = np.diag(L)
        if np.min(d) <= 1e-12 * max(1.0, float(np.max(d))):
            raise ValueError("%s is numerically singular" % name)
        factors.append(L)
    L1, L2 = factors
    # tr(sigma2^{-1} sigma1) = ||L2^{-1} L1||_F^2
    W = np.linalg.solve(L2, L1)
    trace_term = float(np.sum(W * W))
    logdet1 = 2.0 * float(np.sum(np.log(np.diag(L1))))
    logdet2 = 2.0 * float(np.sum(np.log(np.diag(L2))))
    N = s1.shape[0]
    return 0.5 * n * (trace_term - N + logdet2 - logdet1)
