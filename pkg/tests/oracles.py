"""Independent reference implementations used by the tests.

Everything here is written from the formulas with explicit loops and shares
no code with the package, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize


def soft(a, lam):
    if a > lam:
        return a - lam
    if a < -lam:
        return a + lam
    return 0.0


def objective(X, M, Y, alpha, beta, gamma, lam1, lam2, lam3, c0, c1):
    n, q = X.shape
    p = M.shape[1]
    loss = 0.0
    for i in range(n):
        for k in range(p):
            fit = sum(X[i, j] * alpha[j, k] for j in range(q))
            loss += (M[i, k] - fit) ** 2
        fy = sum(X[i, j] * gamma[j] for j in range(q)) + sum(M[i, k] * beta[k] for k in range(p))
        loss += (Y[i] - fy) ** 2
    r1 = 0.0
    for j in range(q):
        for k in range(p):
            r1 += abs(alpha[j, k] * beta[k]) + c0 * (alpha[j, k] ** 2 + beta[k] ** 2)
    r1 += c1 * (sum(abs(alpha[j, k]) for j in range(q) for k in range(p)) + sum(abs(b) for b in beta))
    r2 = 0.0
    for j in range(q):
        r2 += math.sqrt(p) * math.sqrt(sum((alpha[j, k] * beta[k]) ** 2 for k in range(p)))
    r3 = sum(abs(g) for g in gamma)
    return 0.5 * loss + lam1 * r1 + lam2 * r2 + lam3 * r3


def mu_update(alpha, beta, tau, lam1, lam2, rho):
    q, p = alpha.shape
    mu = np.zeros((q, p))
    for j in range(q):
        s = [soft(alpha[j, k] * beta[k] - tau[j, k] / rho, lam1 / rho) for k in range(p)]
        norm = math.sqrt(sum(v * v for v in s))
        if norm == 0:
            continue
        shrink = max(norm - lam2 * math.sqrt(p) / rho, 0.0)
        for k in range(p):
            mu[j, k] = shrink * s[k] / norm
    return mu


def alpha_update(X, M, alpha, beta, mu, tau, lam1, c0, c1, rho):
    q, p = alpha.shape
    n = X.shape[0]
    new = np.zeros((q, p))
    for j in range(q):
        xj = X[:, j]
        xx = float(xj @ xj)
        for k in range(p):
            resid = np.array([M[i, k] - sum(X[i, l] * alpha[l, k] for l in range(q) if l != j) for i in range(n)])
            w = float(resid @ xj) + beta[k] * tau[j, k] + rho * beta[k] * mu[j, k]
            v = rho * beta[k] ** 2 + 2 * c0 * lam1 + xx
            new[j, k] = soft(w, lam1 * c1) / v
    return new


def beta_update(X, M, Y, alpha, gamma, mu, tau, lam1, c0, c1, rho):
    q, p = alpha.shape
    V = M.T @ M
    for k in range(p):
        V[k, k] += rho * sum(alpha[j, k] ** 2 for j in range(q)) + 2 * c0 * lam1 * q
    resid = Y - X @ gamma
    w = np.array([
        M[:, k] @ resid + sum(alpha[j, k] * tau[j, k] + rho * alpha[j, k] * mu[j, k] for j in range(q))
        for k in range(p)
    ])
    return np.linalg.inv(V) @ np.array([soft(v, lam1 * c1) for v in w])


def gamma_update(X, M, Y, beta, lam3):
    q = X.shape[1]
    resid = Y - M @ beta
    return np.array([soft(float(X[:, j] @ resid), lam3) / float(X[:, j] @ X[:, j]) for j in range(q)])


def tau_update(tau, mu, alpha, beta, rho):
    q, p = tau.shape
    out = tau.copy()
    for j in range(q):
        for k in range(p):
            out[j, k] += rho * (mu[j, k] - alpha[j, k] * beta[k])
    return out


def convex_oracle(X, M, Y, lam1, lam3, c0, c1):
    """Global minimum for ``lambda2 = 0`` with a conic solver.

    Uses ``|ab| + c0 (a^2 + b^2) = (|a| + |b|)^2 / 2 + (c0 - 1/2)(a^2 + b^2)``,
    which is a sum of convex terms for ``c0 >= 1/2``.
    """
    import cvxpy as cp

    q, p = X.shape[1], M.shape[1]
    a = cp.Variable((q, p))
    b = cp.Variable(p)
    g = cp.Variable(q)
    ones = np.ones((q, 1))
    pair = cp.abs(a) + ones @ cp.reshape(cp.abs(b), (1, p), order="C")
    r1 = 0.5 * cp.sum(cp.square(pair)) + (c0 - 0.5) * (cp.sum_squares(a) + q * cp.sum_squares(b))
    r1 = r1 + c1 * (cp.sum(cp.abs(a)) + cp.sum(cp.abs(b)))
    loss = cp.sum_squares(M - X @ a) + cp.sum_squares(Y - X @ g - M @ b)
    prob = cp.Problem(cp.Minimize(0.5 * loss + lam1 * r1 + lam3 * cp.norm1(g)))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return float(prob.value), a.value, b.value, g.value


def split_oracle(X, M, Y, lam1, lam2, lam3, c0, c1, starts=8, seed=0):
    """Multi-start bound-constrained quasi-Newton on a sign-split reformulation.

    Each coefficient is ``u - v`` with ``u, v >= 0`` and ``|x|`` replaced by
    ``u + v``; the two problems share their minima because any overlap of
    ``u`` and ``v`` only adds penalty. Gradients are analytic.
    """
    q, p = X.shape[1], M.shape[1]
    na, nb, ng = q * p, p, q
    XtX, XtM, MtM, XtY, MtY = X.T @ X, X.T @ M, M.T @ M, X.T @ Y, M.T @ Y
    const = float(np.sum(M * M) + Y @ Y)
    sp = math.sqrt(p)
    eps = 1e-30

    def unpack(z):
        u, v = z[: na + nb + ng], z[na + nb + ng:]
        x, s = u - v, u + v
        return (x[:na].reshape(q, p), x[na:na + nb], x[na + nb:],
                s[:na].reshape(q, p), s[na:na + nb], s[na + nb:])

    def f(z):
        a, b, g, sa, sb, sg = unpack(z)
        loss = (const - 2 * np.sum(a * XtM) + np.sum(a * (XtX @ a)) - 2 * g @ XtY - 2 * b @ MtY
                + g @ XtX @ g + 2 * g @ XtM @ b + b @ MtM @ b)
        dl_a = -2 * XtM + 2 * XtX @ a
        dl_b = -2 * MtY + 2 * XtM.T @ g + 2 * MtM @ b
        dl_g = -2 * XtY + 2 * XtX @ g + 2 * XtM @ b
        r1 = np.sum(sa * sb) + c0 * (np.sum(a * a) + q * np.sum(b * b)) + c1 * (sa.sum() + sb.sum())
        prod = a * b
        rows = np.sqrt(np.sum(prod * prod, axis=1) + eps)
        r2 = sp * rows.sum()
        val = 0.5 * loss + lam1 * r1 + lam2 * r2 + lam3 * sg.sum()
        # gradients with respect to the signed value x and the magnitude s
        gx_a = 0.5 * dl_a + lam1 * 2 * c0 * a + lam2 * sp * (prod * b) / rows[:, None]
        gx_b = 0.5 * dl_b + lam1 * 2 * c0 * q * b + lam2 * sp * np.sum(prod * a / rows[:, None], axis=0)
        gx_g = 0.5 * dl_g
        gs_a = lam1 * (sb[None, :] + c1) * np.ones_like(sa)
        gs_b = lam1 * (sa.sum(axis=0) + c1)
        gs_g = lam3 * np.ones(q)
        gx = np.concatenate([gx_a.ravel(), gx_b, gx_g])
        gs = np.concatenate([gs_a.ravel(), gs_b, gs_g])
        return val, np.concatenate([gx + gs, -gx + gs])

    rng = np.random.default_rng(seed)
    dim = 2 * (na + nb + ng)
    best = None
    inits = [np.zeros(dim)]
    ols_a = np.linalg.lstsq(X, M, rcond=None)[0]
    ols_bg = np.linalg.lstsq(np.column_stack([M, X]), Y, rcond=None)[0]
    x0 = np.concatenate([ols_a.ravel(), ols_bg[:p], ols_bg[p:]])
    inits.append(np.concatenate([np.maximum(x0, 0), np.maximum(-x0, 0)]))
    inits += [np.abs(rng.normal(size=dim)) for _ in range(starts - 2)]
    for z0 in inits:
        res = minimize(f, z0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * dim,
                       options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 20000, "maxfun": 40000})
        if best is None or res.fun < best.fun:
            best = res
    a, b, g, *_ = unpack(best.x)
    return float(best.fun), a, b, g


def eigen_pca(X):
    """Eigen-decomposition of the sample covariance, signed like the package."""
    Z = X - X.mean(axis=0)
    cov = Z.T @ Z / (X.shape[0] - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    for j in range(vecs.shape[1]):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] *= -1
    return vals, vecs


def normal_equations_residual(C, y):
    D = np.column_stack([np.ones(len(y)), C])
    coef = np.linalg.solve(D.T @ D, D.T @ y)
    return y - D @ coef
