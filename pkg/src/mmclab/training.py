"""Model fitting: contrastive encoders by closed-form SVD and by gradient
descent, supervised linear models with a hard-margin oracle, the supervised-
contrastive closed form, and linear probes on frozen representations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import ClassMeanCov, CrossCov, empirical_cross_cov
from .datagen import PairedDataset
from .errors import ArgumentError, DimensionError, DomainError, InfeasibleError, TrainingError
from .numerics import Dictionary, RngStream, _readonly, svd_top

# Defaults for gradient-descent fits. Long horizons matter for the supervised
# trainers because predictions ride on the implicit-bias (max-margin) direction.
MMCL_GD_DEFAULTS = dict(lr=0.1, epochs=2000, init_scale=1e-3)
SL_GD_DEFAULTS = dict(lr=0.05, epochs=20000, init_scale=1e-3)
GRAD_TOL = 1e-8


@dataclass(frozen=True)
class MMCLModel:
    """Linear encoder pair, or just the effective matrix G = W_I^T W_T.

    Zero-shot predictions depend on G only; the factors are kept when a fit
    produces them (gradient descent) and omitted by the closed form.
    """

    G: np.ndarray                     # d_I x d_T
    p_dim: int
    rho: float
    W_I: np.ndarray | None = None     # p x d_I
    W_T: np.ndarray | None = None     # p x d_T
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "G", _readonly(self.G))
        if (self.W_I is None) != (self.W_T is None):
            raise ArgumentError("factors must be provided together or not at all")
        if self.W_I is not None:
            object.__setattr__(self, "W_I", _readonly(self.W_I))
            object.__setattr__(self, "W_T", _readonly(self.W_T))
            gap = np.linalg.norm(self.W_I.T @ self.W_T - self.G)
            scale = max(np.linalg.norm(self.G), 1e-30)
            if gap / scale >= 1e-8:
                raise ArgumentError(
                    f"factors do not reproduce G (relative gap {gap / scale:.2e})")


@dataclass(frozen=True)
class SLModel:
    """Supervised linear weights; q = 1 for binary (sign rule), else one
    column per class (argmax rule over ``classes``)."""

    W: np.ndarray                     # d x q
    q: int
    classes: tuple
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "W", _readonly(self.W))
        if self.W.shape[1] != self.q:
            raise DimensionError(f"W has {self.W.shape[1]} columns but q={self.q}")


@dataclass(frozen=True)
class SupConEncoder:
    """Rank-limited encoder from the class-mean covariance eigensystem.

    Rows are sqrt(lambda_i / rho) u_i^T in the canonical (sign-fixed)
    eigenbasis, so the factorization freedom is pinned.
    """

    W: np.ndarray                     # p_dim x d
    eigenvalues: np.ndarray           # p_dim, descending
    p_dim: int
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "W", _readonly(self.W))
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.W.T


@dataclass(frozen=True)
class ProbeModel:
    """Linear classifier fitted on frozen representations."""

    B: np.ndarray                     # q x p
    classes: tuple
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "B", _readonly(self.B))


# ---------------------------------------------------------------------------
# multimodal contrastive fits


def _lift(g_latent: np.ndarray, image_dictionary: Dictionary | None,
          text_dictionary: Dictionary | None) -> np.ndarray:
    if image_dictionary is None and text_dictionary is None:
        return g_latent
    if image_dictionary is None or text_dictionary is None:
        raise ArgumentError("both dictionaries are needed to lift a latent covariance")
    if (image_dictionary.latent_dim, text_dictionary.latent_dim) != g_latent.shape:
        raise DimensionError("dictionary latent dims do not match the covariance shape")
    return image_dictionary.matrix @ g_latent @ text_dictionary.matrix.T


def mmcl_fit_closed_form(S: CrossCov, p_dim: int, rho: float,
                         image_dictionary: Dictionary | None = None,
                         text_dictionary: Dictionary | None = None) -> MMCLModel:
    """Closed-form minimizer: G = (1/rho) * best rank-p approximation of S.

    A latent-space population covariance is factorized in latent coordinates
    and lifted through the dictionaries afterwards (the lift preserves singular
    structure because dictionary columns are orthonormal).
    """
    if rho <= 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if not 1 <= p_dim <= min(S.S.shape):
        raise DimensionError(f"p_dim={p_dim} out of range for covariance shape {S.S.shape}")
    top = svd_top(S.scaled(), p_dim)
    g = top.reconstruct() / rho
    if S.space == "latent":
        g = _lift(g, image_dictionary, text_dictionary)
    elif image_dictionary is not None or text_dictionary is not None:
        raise ArgumentError("dictionaries only apply to latent-space covariances")
    return MMCLModel(G=g, p_dim=p_dim, rho=rho,
                     training_meta={"fit": "closed-form", "rank": top.rank})


def _mmcl_objective(w_i: np.ndarray, w_t: np.ndarray, s: np.ndarray, rho: float):
    g = w_i.T @ w_t
    loss = -np.einsum("ij,ij->", g, s) + 0.5 * rho * np.einsum("ij,ij->", g, g)
    grad_i = -w_t @ s.T + rho * w_t @ g.T
    grad_t = -w_i @ s + rho * w_i @ g
    return loss, grad_i, grad_t


def mmcl_fit_gd(data: PairedDataset, p_dim: int, rho: float,
                lr: float = MMCL_GD_DEFAULTS["lr"],
                epochs: int = MMCL_GD_DEFAULTS["epochs"],
                rng: RngStream | None = None,
                init_scale: float = MMCL_GD_DEFAULTS["init_scale"]) -> MMCLModel:
    """Full-batch gradient descent on the contrastive loss from small Gaussian init.

    The pairwise loss equals -<G, S> + (rho/2)||G||_F^2 exactly (S the
    empirical cross-covariance), so gradients are computed in that form; the
    identity itself is exercised by :func:`mmcl_loss` tests.
    """
    if data.n < 2:
        raise ArgumentError("gradient-descent fit needs n >= 2")
    if lr <= 0:
        raise DomainError(f"lr must be positive, got {lr}")
    if rng is None:
        raise ArgumentError("mmcl_fit_gd requires an RngStream for initialization")
    s = empirical_cross_cov(data).S
    g = rng.generator()
    w_i = init_scale * g.standard_normal((p_dim, data.d_image))
    w_t = init_scale * g.standard_normal((p_dim, data.d_text))
    loss0, _, _ = _mmcl_objective(w_i, w_t, s, rho)
    blowup = 1e3 * (abs(loss0) + 1.0)
    loss = loss0
    grad_norm = np.inf
    for epoch in range(epochs):
        loss, grad_i, grad_t = _mmcl_objective(w_i, w_t, s, rho)
        if not np.isfinite(loss) or loss > blowup:
            raise TrainingError(f"contrastive GD diverged at epoch {epoch} (lr={lr})")
        grad_norm = np.sqrt(np.sum(grad_i ** 2) + np.sum(grad_t ** 2))
        if grad_norm < GRAD_TOL:
            break
        w_i = w_i - lr * grad_i
        w_t = w_t - lr * grad_t
    meta = {"fit": "gd", "lr": lr, "epochs": epochs, "init_scale": init_scale,
            "final_loss": float(loss), "final_grad_norm": float(grad_norm)}
    return MMCLModel(G=w_i.T @ w_t, p_dim=p_dim, rho=rho, W_I=w_i, W_T=w_t,
                     training_meta=meta)


def mmcl_loss(model: MMCLModel, data: PairedDataset) -> float:
    """Exact contrastive loss of a factored model on a dataset.

    Averages the symmetric contrast terms over ordered pairs i != j and adds
    the (rho/2)||W_I^T W_T||_F^2 regularizer. The pair sums are collapsed
    algebraically (sum_ij s_ij = <sum_i g_I, sum_j g_T>) so no n x n similarity
    matrix is formed; the value is identical to the literal double sum.
    """
    if model.W_I is None:
        raise ArgumentError("mmcl_loss needs a model with factors")
    n = data.n
    if n < 2:
        raise ArgumentError("mmcl loss needs n >= 2")
    r_i = data.x_image @ model.W_I.T
    r_t = data.x_text @ model.W_T.T
    total = float(r_i.sum(axis=0) @ r_t.sum(axis=0))
    diag = float(np.einsum("ij,ij->", r_i, r_t))
    contrast = ((total - diag) - (n - 1) * diag) / (n * (n - 1))
    g = model.W_I.T @ model.W_T
    return contrast + 0.5 * model.rho * float(np.einsum("ij,ij->", g, g))


# ---------------------------------------------------------------------------
# supervised fits (logistic / cross-entropy gradient descent)


def _as_binary_labels(labels) -> np.ndarray:
    y = np.asarray(labels)
    if not set(np.unique(y)) <= {-1, 1}:
        raise ArgumentError("logistic loss expects labels in {-1, +1}")
    return y.astype(float)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logistic_gd(x, y, lr, epochs, w0, snapshot_every=0, loss_scaled=False):
    n = x.shape[0]
    w = w0.copy()
    snapshots = []
    loss = np.inf
    grad_norm = np.inf
    blowup = None
    for epoch in range(epochs):
        margins = y * (x @ w)
        loss = float(np.mean(np.logaddexp(0.0, -margins)))
        if blowup is None:
            blowup = 1e3 * (loss + 1.0)
        if not np.isfinite(loss) or loss > blowup:
            raise TrainingError(f"logistic GD diverged at epoch {epoch} (lr={lr})")
        sig = _stable_sigmoid(-margins)
        grad = -(x.T @ (y * sig)) / n
        grad_norm = float(np.linalg.norm(grad))
        if snapshot_every and epoch % snapshot_every == 0:
            snapshots.append(w.copy())
        if grad_norm < (GRAD_TOL * loss if loss_scaled else GRAD_TOL):
            break
        # loss-scaled steps counteract the vanishing-gradient tail after
        # separation and reach the max-margin direction at desk scale
        step = lr / max(loss, 1e-300) if loss_scaled else lr
        w = w - step * grad
    return w, loss, grad_norm, snapshots


def _cross_entropy_gd(x, labels_idx, q, lr, epochs, w0, snapshot_every=0,
                      loss_scaled=False):
    n = x.shape[0]
    w = w0.copy()
    onehot = np.zeros((n, q))
    onehot[np.arange(n), labels_idx] = 1.0
    snapshots = []
    loss = np.inf
    grad_norm = np.inf
    blowup = None
    for epoch in range(epochs):
        scores = x @ w
        scores = scores - scores.max(axis=1, keepdims=True)
        expsc = np.exp(scores)
        probs = expsc / expsc.sum(axis=1, keepdims=True)
        loss = float(-np.mean(np.log(probs[np.arange(n), labels_idx] + 1e-300)))
        if blowup is None:
            blowup = 1e3 * (loss + 1.0)
        if not np.isfinite(loss) or loss > blowup:
            raise TrainingError(f"cross-entropy GD diverged at epoch {epoch} (lr={lr})")
        grad = x.T @ (probs - onehot) / n
        grad_norm = float(np.linalg.norm(grad))
        if snapshot_every and epoch % snapshot_every == 0:
            snapshots.append(w.copy())
        if grad_norm < (GRAD_TOL * loss if loss_scaled else GRAD_TOL):
            break
        step = lr / max(loss, 1e-300) if loss_scaled else lr
        w = w - step * grad
    return w, loss, grad_norm, snapshots


def sl_fit_gd(images: np.ndarray, labels, loss_kind: str = "logistic",
              lr: float = SL_GD_DEFAULTS["lr"],
              epochs: int = SL_GD_DEFAULTS["epochs"],
              rng: RngStream | None = None,
              init_scale: float = SL_GD_DEFAULTS["init_scale"],
              snapshot_every: int = 0, loss_scaled: bool = False) -> SLModel:
    """Supervised linear fit by full-batch gradient descent.

    Binary uses logistic loss on +-1 labels (q = 1, sign rule); multiclass uses
    cross-entropy over the sorted distinct labels. At long horizons the
    normalized direction approaches the hard-margin separator; constant steps
    get there only logarithmically, so ``loss_scaled=True`` offers the usual
    normalized-step acceleration for oracle comparisons.
    """
    x = np.asarray(images, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ArgumentError("images must be finite")
    if len(np.unique(np.asarray(labels))) < 2:
        raise ArgumentError("labels must cover at least 2 classes")
    if rng is None:
        raise ArgumentError("sl_fit_gd requires an RngStream for initialization")
    g = rng.generator()
    if loss_kind == "logistic":
        y = _as_binary_labels(labels)
        w0 = init_scale * g.standard_normal(x.shape[1])
        w, loss, grad_norm, snaps = _logistic_gd(x, y, lr, epochs, w0,
                                                 snapshot_every, loss_scaled)
        wmat, q, classes = w[:, None], 1, (-1, 1)
    elif loss_kind == "cross-entropy":
        classes = tuple(int(v) for v in np.unique(np.asarray(labels)))
        index = {label: j for j, label in enumerate(classes)}
        labels_idx = np.array([index[int(v)] for v in np.asarray(labels)])
        q = len(classes)
        w0 = init_scale * g.standard_normal((x.shape[1], q))
        wmat, loss, grad_norm, snaps = _cross_entropy_gd(
            x, labels_idx, q, lr, epochs, w0, snapshot_every, loss_scaled)
    else:
        raise ArgumentError(f"loss_kind must be logistic or cross-entropy, got {loss_kind!r}")
    meta = {"loss_kind": loss_kind, "lr": lr, "epochs": epochs,
            "loss_scaled": loss_scaled, "final_loss": loss,
            "final_grad_norm": grad_norm}
    if snapshot_every:
        meta["snapshots"] = snaps
    return SLModel(W=wmat, q=q, classes=classes, training_meta=meta)


# ---------------------------------------------------------------------------
# hard-margin oracle (dual projected gradient ascent; test oracle only)

_ORACLE_MAX_SIZE = 500
_ORACLE_FEAS_TOL = 1e-6
_ORACLE_DUAL_CAP = 1e12


def _accelerated_ascent(grad_fn, alpha0, step, max_iter, done_fn):
    """FISTA-style projected ascent on a concave quadratic, alpha >= 0."""
    alpha = alpha0
    momentum = alpha0
    t = 1.0
    for it in range(max_iter):
        g = grad_fn(momentum)
        nxt = np.maximum(0.0, momentum + step * g)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        momentum = nxt + ((t - 1.0) / t_next) * (nxt - alpha)
        alpha, t = nxt, t_next
        if it % 200 == 0 and done_fn(alpha):
            break
    return alpha


def hard_margin_oracle(images: np.ndarray, labels,
                       max_iter: int = 200_000) -> SLModel:
    """Minimum-norm weights satisfying all pairwise unit-margin constraints.

    Solves the hard-margin dual by accelerated projected gradient ascent and
    certifies feasibility within 1e-6 before returning. Intended only as a test
    oracle on small instances (n, d <= 500); non-separable data raises.
    """
    x = np.asarray(images, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n > _ORACLE_MAX_SIZE or d > _ORACLE_MAX_SIZE:
        raise ArgumentError(f"oracle restricted to n, d <= {_ORACLE_MAX_SIZE}, got {x.shape}")
    y = np.asarray(labels)
    binary = set(np.unique(y)) <= {-1, 1}

    if binary:
        yv = y.astype(float)
        k = (x @ x.T) * np.outer(yv, yv)
        step = 1.0 / max(np.linalg.eigvalsh(k).max(), 1e-12)

        def w_of(alpha):
            return x.T @ (alpha * yv)

        def feasible(alpha):
            margins = yv * (x @ w_of(alpha))
            return margins.min() >= 1.0 - _ORACLE_FEAS_TOL

        def done(alpha):
            # feasible with the duality gap closed (KKT: sum(alpha) = ||w||^2)
            w = w_of(alpha)
            norm2 = float(w @ w)
            if not feasible(alpha):
                return False
            return abs(norm2 - alpha.sum()) <= 1e-8 * max(1.0, norm2)

        def grad(alpha):
            dual = alpha.sum() - 0.5 * float(alpha @ k @ alpha)
            if dual > _ORACLE_DUAL_CAP:
                raise InfeasibleError("dual unbounded: training data are not separable")
            return 1.0 - k @ alpha

        alpha = _accelerated_ascent(grad, np.zeros(n), step, max_iter, done)
        w = w_of(alpha)
        if not feasible(alpha):
            raise InfeasibleError("margin constraints unsatisfied: data not separable "
                                  "(or oracle iteration budget too small)")
        return SLModel(W=w[:, None], q=1, classes=(-1, 1),
                       training_meta={"fit": "hard-margin-oracle"})

    classes = tuple(int(v) for v in np.unique(y))
    q = len(classes)
    index = {label: j for j, label in enumerate(classes)}
    own = np.array([index[int(v)] for v in y])
    onehot = np.zeros((n, q))
    onehot[np.arange(n), own] = 1.0
    gram = x @ x.T
    lam = max(np.linalg.eigvalsh(gram).max(), 1e-12)
    step = 1.0 / (lam * (1.0 + np.sqrt(q)) ** 2)

    def w_of(alpha):
        coeff = onehot * alpha.sum(axis=1, keepdims=True) - alpha
        return x.T @ coeff

    def margins_of(alpha):
        scores = x @ w_of(alpha)
        own_scores = scores[np.arange(n), own]
        gaps = own_scores[:, None] - scores
        gaps[np.arange(n), own] = np.inf
        return gaps

    def feasible(alpha):
        return margins_of(alpha).min() >= 1.0 - _ORACLE_FEAS_TOL

    def done(alpha):
        if not feasible(alpha):
            return False
        w = w_of(alpha)
        norm2 = float(np.einsum("ij,ij->", w, w))
        return abs(norm2 - alpha.sum()) <= 1e-8 * max(1.0, norm2)

    def grad(alpha):
        w = w_of(alpha)
        dual = alpha.sum() - 0.5 * float(np.einsum("ij,ij->", w, w))
        if dual > _ORACLE_DUAL_CAP:
            raise InfeasibleError("dual unbounded: training data are not separable")
        scores = x @ w
        g = 1.0 - (scores[np.arange(n), own][:, None] - scores)
        g[np.arange(n), own] = 0.0
        return g

    alpha = _accelerated_ascent(grad, np.zeros((n, q)), step, max_iter, done)
    if not feasible(alpha):
        raise InfeasibleError("margin constraints unsatisfied: data not separable "
                              "(or oracle iteration budget too small)")
    return SLModel(W=w_of(alpha), q=q, classes=classes,
                   training_meta={"fit": "hard-margin-oracle"})


# ---------------------------------------------------------------------------
# supervised-contrastive closed form and linear probes


def supcon_fit_closed_form(cov: ClassMeanCov, p_dim: int, rho: float) -> SupConEncoder:
    """Encoder rows sqrt(lambda_i / rho) u_i^T from the top class-mean eigenpairs.

    The eigenbasis is canonicalized (descending eigenvalues, each vector's
    largest-magnitude entry made positive) so repeated fits are bit-identical.
    """
    if rho <= 0:
        raise DomainError(f"rho must be positive, got {rho}")
    d = cov.S.shape[0]
    if not 1 <= p_dim <= d:
        raise DimensionError(f"p_dim={p_dim} out of range for covariance dim {d}")
    evals, evecs = np.linalg.eigh(cov.S)
    order = np.argsort(evals)[::-1][:p_dim]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    anchor = np.abs(evecs).argmax(axis=0)
    signs = np.sign(evecs[anchor, np.arange(evecs.shape[1])])
    evecs = evecs * np.where(signs == 0, 1.0, signs)
    w = np.sqrt(evals / rho)[:, None] * evecs.T
    return SupConEncoder(W=w, eigenvalues=evals, p_dim=p_dim, rho=rho)


def probe_fit(representations: np.ndarray, labels, lr: float = SL_GD_DEFAULTS["lr"],
              epochs: int = SL_GD_DEFAULTS["epochs"],
              rng: RngStream | None = None) -> ProbeModel:
    """Linear classifier on frozen representations (same GD contract as sl_fit_gd)."""
    reps = np.asarray(representations, dtype=float)
    if not np.all(np.isfinite(reps)):
        raise ArgumentError("representations must be finite")
    y = np.asarray(labels)
    binary = set(np.unique(y)) <= {-1, 1}
    kind = "logistic" if binary else "cross-entropy"
    model = sl_fit_gd(reps, y, loss_kind=kind, lr=lr, epochs=epochs, rng=rng)
    return ProbeModel(B=model.W.T, classes=model.classes,
                      training_meta=model.training_meta)
