"""L2-regularised logistic regression.

Objective (labels in {-1, +1}, bias unpenalised)::

    f(w, b) = sum_i log(1 + exp(-y_i (w.x_i + b))) + lam * ||w||^2

Inputs are z-scored with statistics from the training split.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAMBDA_MIN, LAMBDA_MAX, N_LAMBDAS = 1e-4, 1e4, 100


class DegenerateLabelsError(ValueError):
    pass


def lambda_grid(n: int = N_LAMBDAS, lo: float = LAMBDA_MIN, hi: float = LAMBDA_MAX) -> np.ndarray:
    """``n`` values evenly spaced in log scale over ``[lo, hi]``, endpoints included."""
    return np.logspace(np.log10(lo), np.log10(hi), n)


def _sigmoid(z):
    # exp of a non-positive argument only
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 1) | (y == -1)):
        raise ValueError("labels must be -1 or +1")
    return y


def logreg_objective(params, X, y, lam: float) -> float:
    """Objective at ``params = [w_1..w_d, b]``."""
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    params = np.asarray(params, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y) or params.shape != (X.shape[1] + 1,):
        raise ValueError(f"dimension mismatch: X {X.shape}, y {y.shape}, params {params.shape}")
    w, b = params[:-1], params[-1]
    margin = y * (X @ w + b)
    return float(np.logaddexp(0.0, -margin).sum() + lam * (w @ w))


def logreg_gradient(params, X, y, lam: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    params = np.asarray(params, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y) or params.shape != (X.shape[1] + 1,):
        raise ValueError(f"dimension mismatch: X {X.shape}, y {y.shape}, params {params.shape}")
    return _value_grad(params, X, y, lam)[1]


def _value_grad(params, X, y, lam):
    """Objective, gradient and the per-sample curvature ``s(1-s)``."""
    w, b = params[:-1], params[-1]
    margin = y * (X @ w + b)
    e = np.exp(-np.abs(margin))
    value = (np.maximum(-margin, 0.0) + np.log1p(e)).sum() + lam * (w @ w)
    # sigmoid(-margin), computed without overflow
    s_neg = np.where(margin >= 0, e, 1.0) / (1.0 + e)
    r = -y * s_neg
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + 2.0 * lam * w
    grad[-1] = r.sum()
    return float(value), grad, s_neg * (1.0 - s_neg)


def _newton_direction(X, lam, grad, curvature):
    d = X.shape[1]
    root = np.sqrt(curvature)
    Xs = X * root[:, None]
    H = np.empty((d + 1, d + 1))
    H[:d, :d] = Xs.T @ Xs
    H[:d, d] = H[d, :d] = Xs.T @ root
    H[d, d] = curvature.sum()
    H[np.arange(d), np.arange(d)] += 2.0 * lam
    H[np.diag_indices(d + 1)] += 1e-10 * (1.0 + np.abs(np.diag(H)))
    try:
        return -np.linalg.solve(H, grad)
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(H, grad, rcond=None)[0]


def minimize_logreg(X, y, lam: float, *, params0=None, tol: float = 1e-6,
                    max_iters: int = 1000, solver: str = "newton"):
    """Minimise the objective on already-standardised ``X``.

    Returns ``(params, objective, n_iters, converged)``.  Both solvers use an
    Armijo backtracking line search; ``"gd"`` steps along the negative
    gradient, ``"newton"`` along the Newton direction.
    """
    if solver not in ("newton", "gd"):
        raise ValueError(f"unknown solver {solver!r}")
    n, d = X.shape
    params = np.zeros(d + 1) if params0 is None else np.array(params0, dtype=np.float64)
    f, g, curv = _value_grad(params, X, y, lam)
    gd_step = 1.0 / (0.25 * (np.einsum("ij,ij->", X, X) + n) + 2.0 * lam + 1e-12)
    for it in range(max_iters):
        if np.max(np.abs(g)) <= tol:
            return params, f, it, True
        if solver == "newton":
            direction = _newton_direction(X, lam, g, curv)
            slope = g @ direction
            if not slope < 0:
                direction, slope = -g, -(g @ g)
            alpha = 1.0
        else:
            direction, slope = -g, -(g @ g)
            alpha = gd_step * 4.0
        slack = 1e-13 * (abs(f) + 1.0)
        while True:
            trial = params + alpha * direction
            f_new, g_new, c_new = _value_grad(trial, X, y, lam)
            if f_new <= f + 1e-4 * alpha * slope:
                break
            # near the optimum the decrease drops below rounding noise in f;
            # fall back to the derivative form of the sufficient-decrease test
            if f_new <= f + slack and g_new @ direction <= (2 * 0.1 - 1) * slope:
                break
            alpha *= 0.5
            if alpha < 1e-20:
                return params, f, it, False
        if solver == "gd":
            gd_step = alpha
        params, f, g, curv = trial, f_new, g_new, c_new
    return params, f, max_iters, bool(np.max(np.abs(g)) <= tol)


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray      # on the standardised scale
    bias: float
    lam: float
    mean: np.ndarray
    scale: np.ndarray
    objective: float = float("nan")
    n_iters: int = 0
    converged: bool = True

    kind = "linear"

    @property
    def dim(self) -> int:
        return len(self.weights)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        return ((X - self.mean) / self.scale) @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "lambda": self.lam,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "objective": self.objective,
            "n_iters": self.n_iters,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearModel":
        return cls(
            weights=np.asarray(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            lam=float(data["lambda"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            objective=float(data.get("objective", float("nan"))),
            n_iters=int(data.get("n_iters", 0)),
            converged=bool(data.get("converged", True)),
        )


def standardization(X) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[~(scale > 1e-12)] = 1.0
    return mean, scale


def _validate_training(X, y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    y = _check_labels(y)
    if X.shape[0] != len(y):
        raise ValueError(f"dimension mismatch: {X.shape[0]} rows, {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    if not ((y == 1).any() and (y == -1).any()):
        raise DegenerateLabelsError("degenerate labels: training data has a single class")
    return X, y


def train_logreg(X, y, lam: float, *, tol: float = 1e-6, max_iters: int = 1000,
                 solver: str = "newton", params0=None) -> LinearModel:
    X, y = _validate_training(X, y)
    mean, scale = standardization(X)
    Z = (X - mean) / scale
    params, f, it, ok = minimize_logreg(Z, y, lam, params0=params0, tol=tol,
                                        max_iters=max_iters, solver=solver)
    return LinearModel(params[:-1].copy(), float(params[-1]), float(lam), mean, scale,
                       objective=f, n_iters=it, converged=ok)


def fit_lambda_path(X, y, lams, *, tol: float = 1e-6, max_iters: int = 1000,
                    solver: str = "newton") -> list[LinearModel]:
    """Fit every lambda in ``lams``, warm-starting from the neighbouring
    stronger-penalty solution.  Returned in the order of ``lams``."""
    X, y = _validate_training(X, y)
    mean, scale = standardization(X)
    Z = (X - mean) / scale
    lams = [float(l) for l in lams]
    models: dict[int, LinearModel] = {}
    params = None
    for k in sorted(range(len(lams)), key=lambda k: -lams[k]):
        params, f, it, ok = minimize_logreg(Z, y, lams[k], params0=params, tol=tol,
                                            max_iters=max_iters, solver=solver)
        models[k] = LinearModel(params[:-1].copy(), float(params[-1]), lams[k], mean, scale,
                                objective=f, n_iters=it, converged=ok)
    return [models[k] for k in range(len(lams))]


def predict_logreg(model: LinearModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"expected vector of length {model.dim}, got shape {x.shape}")
    return float(model.predict_proba(x[None, :])[0])
