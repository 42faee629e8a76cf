"""Kronecker-factored MEM: free energy, gradient, reconstruction and the G/GM/uGM pipeline.

Notation follows the matrix form of the dual problem.  The data ``D`` and
the dual variable ``Lam`` are ``L x J`` (wavelet coefficients x virtual
channels), the reduced lead-field ``G`` is ``J x K`` and each parcel ``p``
owns the column block ``G_p``.  With ``U_p = Lam @ G_p`` the free energy is

    Tr(D.T Lam) - 1/2 Tr(Lam.T St Lam Ss) - sum_p F_p(U_p)

where ``F_p`` mixes the silent log-partition ``v_p/2 ||U||^2`` and the
active one ``Tr(U.T Omega_p) + 1/2 Tr(U.T St_p U Ss_p)`` with weight
``alpha_p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .core import KroneckerCovariance, check_spd, trace_quad
from .covariance import regularize_spd
from .optimizer import OptimizerConfig, maximize
from .wavelet import dwt_inverse, embed_coefficients

STAGES = ("G", "GM", "uGM")


@dataclass(frozen=True)
class ParcelPrior:
    """Two-state reference law of one parcel.

    ``omega`` is the ``L x K_p`` active-state mean, ``sigma_t`` (``L x L``)
    and ``sigma_s`` (``K_p x K_p``) the Kronecker factors of the active-state
    covariance, ``v`` the silent-state variance and ``alpha`` the prior
    probability of the active state.
    """

    alpha: float
    v: float
    omega: np.ndarray
    sigma_t: np.ndarray
    sigma_s: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.v > 0:
            raise ValueError(f"v must be positive, got {self.v}")
        omega = np.asarray(self.omega, dtype=float)
        st = check_spd(self.sigma_t, "sigma_t")
        ss = check_spd(self.sigma_s, "sigma_s")
        if omega.shape != (st.shape[0], ss.shape[0]):
            raise ValueError(
                f"omega has shape {omega.shape}, expected {(st.shape[0], ss.shape[0])}"
            )
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "sigma_t", st)
        object.__setattr__(self, "sigma_s", ss)

    @classmethod
    def gaussian(cls, L, K_p, v, alpha=0.25):
        """Zero-mean white prior, identical in both states."""
        return cls(alpha, v, np.zeros((L, K_p)), v * np.eye(L), np.eye(K_p))

    def is_gaussian(self, atol=0.0):
        """True when both states share the log-partition ``v/2 ||U||^2``."""
        if self.alpha == 0.0:
            return True
        L, K_p = self.omega.shape
        return (
            np.allclose(self.omega, 0.0, rtol=0.0, atol=atol)
            and np.allclose(self.sigma_t, self.v * np.eye(L), rtol=0.0, atol=atol * self.v)
            and np.allclose(self.sigma_s, np.eye(K_p), rtol=0.0, atol=atol)
        )


@dataclass(frozen=True)
class MemModel:
    G: np.ndarray
    noise: KroneckerCovariance
    priors: tuple
    parcels: tuple

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        parcels = tuple(np.asarray(p, dtype=int) for p in self.parcels)
        priors = tuple(self.priors)
        L, J = self.noise.shape
        if G.shape[0] != J:
            raise ValueError(f"G has {G.shape[0]} rows, noise spatial factor is {J}x{J}")
        if len(priors) != len(parcels):
            raise ValueError("one prior per parcel is required")
        cover = np.zeros(G.shape[1], dtype=int)
        for p, (idx, prior) in enumerate(zip(parcels, priors)):
            np.add.at(cover, idx, 1)
            if prior.omega.shape != (L, idx.size):
                raise ValueError(
                    f"parcel {p}: prior is {prior.omega.shape}, expected {(L, idx.size)}"
                )
        if not np.all(cover == 1):
            raise ValueError("parcels must tile the columns of G exactly once")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "parcels", parcels)
        object.__setattr__(self, "priors", priors)

    @property
    def L(self):
        return self.noise.shape[0]

    @property
    def J(self):
        return self.noise.shape[1]

    @property
    def K(self):
        return self.G.shape[1]

    def with_priors(self, priors):
        return replace(self, priors=tuple(priors))


@dataclass
class SourceEstimate:
    W_hat: np.ndarray
    alpha_post: np.ndarray
    lambda_star: np.ndarray
    time_courses: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


# --- log-partition functions ------------------------------------------------

def logpart_silent(U, v):
    if not v > 0:
        raise ValueError("v must be positive")
    U = np.asarray(U, dtype=float)
    return 0.5 * v * float(np.sum(U * U))


def logpart_active(U, prior):
    U = np.asarray(U, dtype=float)
    if U.shape != prior.omega.shape:
        raise ValueError(f"U has shape {U.shape}, expected {prior.omega.shape}")
    return float(np.sum(U * prior.omega)) + 0.5 * trace_quad(U, prior.sigma_t, prior.sigma_s)


def mixture_logpart(F1, F0, alpha):
    """``log(alpha e^F1 + (1 - alpha) e^F0)`` without overflow."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return float(F1)
    if alpha == 0.0:
        return float(F0)
    m = max(F1, F0)
    return float(m + np.log(alpha * np.exp(F1 - m) + (1.0 - alpha) * np.exp(F0 - m)))


def posterior_activity(F1, F0, alpha):
    """Updated activity probability ``alpha / (alpha + (1 - alpha) e^(F0 - F1))``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha in (0.0, 1.0):
        return float(alpha)
    t = F1 - F0 + np.log(alpha) - np.log1p(-alpha)
    if t >= 0:
        return float(1.0 / (1.0 + np.exp(-t)))
    e = np.exp(t)
    return float(e / (1.0 + e))


# --- free energy --------------------------------------------------------------

def _check_dims(Lam, model, D=None):
    Lam = np.asarray(Lam, dtype=float)
    if Lam.shape != (model.L, model.J):
        raise ValueError(f"Lambda has shape {Lam.shape}, expected {(model.L, model.J)}")
    if D is not None:
        D = np.asarray(D, dtype=float)
        if D.shape != Lam.shape:
            raise ValueError(f"D has shape {D.shape}, expected {Lam.shape}")
    return Lam, D


def _parcel_pass(Lam, model):
    """Per-parcel mixture log-partitions, posterior probabilities and estimates."""
    U_all = Lam @ model.G
    logparts = np.empty(len(model.priors))
    alpha_post = np.empty(len(model.priors))
    W = np.empty_like(U_all)
    for p, (idx, prior) in enumerate(zip(model.parcels, model.priors)):
        U = U_all[:, idx]
        F0 = logpart_silent(U, prior.v)
        active_grad = prior.omega + prior.sigma_t @ U @ prior.sigma_s
        F1 = float(np.sum(U * prior.omega)) + 0.5 * float(np.sum(U * (active_grad - prior.omega)))
        logparts[p] = mixture_logpart(F1, F0, prior.alpha)
        a = posterior_activity(F1, F0, prior.alpha)
        alpha_post[p] = a
        W[:, idx] = a * active_grad + (1.0 - a) * prior.v * U
    return logparts, alpha_post, W


def free_energy_and_gradient(Lam, model, D):
    Lam, D = _check_dims(Lam, model, D)
    St, Ss = model.noise.temporal, model.noise.spatial
    noise_term = St @ Lam @ Ss
    logparts, _, W = _parcel_pass(Lam, model)
    value = float(np.sum(D * Lam)) - 0.5 * float(np.sum(Lam * noise_term)) - float(np.sum(logparts))
    grad = D - noise_term - W @ model.G.T
    return value, grad


def free_energy(Lam, model, D):
    """Dual objective at ``Lam``; equals 0 at ``Lam = 0``."""
    Lam, D = _check_dims(Lam, model, D)
    noise = 0.5 * trace_quad(Lam, model.noise.temporal, model.noise.spatial)
    logparts, _, _ = _parcel_pass(Lam, model)
    return float(np.sum(D * Lam)) - noise - float(np.sum(logparts))


def free_energy_gradient(Lam, model, D):
    return free_energy_and_gradient(Lam, model, D)[1]


# --- solutions ----------------------------------------------------------------

def reconstruct(Lam, model, selection=None, wavelet_cfg=None, n_times=None):
    """Source estimate from a dual point.

    The per-parcel wavelet-coefficient estimates are assembled into the
    ``L x K`` matrix ``W_hat``.  When a coefficient selection and wavelet
    config are given, time courses are produced by zero-filling the
    unselected coefficients, inverting the transform and truncating to
    ``n_times`` samples.
    """
    Lam, _ = _check_dims(Lam, model)
    _, alpha_post, W = _parcel_pass(Lam, model)
    est = SourceEstimate(W_hat=W, alpha_post=alpha_post, lambda_star=Lam.copy())
    if selection is not None and wavelet_cfg is not None:
        tc = dwt_inverse(embed_coefficients(W, selection), wavelet_cfg)
        est.time_courses = tc[: n_times or wavelet_cfg.padded_length]
    return est


def solve_gaussian_reference(model, D):
    """Closed-form maximizer of the free energy for an all-Gaussian model.

    Solves ``D = St Lam Ss + Lam M`` with ``M = sum_p v_p G_p G_p.T`` by
    diagonalizing the temporal noise factor, which leaves one ``J x J``
    symmetric system per transformed row.
    """
    D = np.asarray(D, dtype=float)
    _check_dims(D, model, D)
    for p, prior in enumerate(model.priors):
        if not prior.is_gaussian(atol=1e-12):
            raise ValueError(f"parcel {p} prior is not the white Gaussian reference")
    M = np.zeros((model.J, model.J))
    for idx, prior in zip(model.parcels, model.priors):
        Gp = model.G[:, idx]
        M += prior.v * (Gp @ Gp.T)
    theta, V = linalg.eigh(model.noise.temporal)
    Dt = V.T @ D
    Lt = np.empty_like(Dt)
    for i, th in enumerate(theta):
        A = th * model.noise.spatial + M
        try:
            Lt[i] = linalg.solve(A, Dt[i], assume_a="pos")
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("singular row system in Gaussian reference") from exc
    return V @ Lt


# --- parameter pipeline --------------------------------------------------------

@dataclass(frozen=True)
class MemConfig:
    alpha: float = 0.25
    rho: float = 0.3
    gamma: float = 0.05
    snr_factor: float = 1.0
    v: float | None = None


def default_source_variance(D, G, noise, snr_factor=1.0):
    """Heuristic silent-state variance from the data energy.

    ``||D||^2 / (J * Tr(St)/L * ||G||^2)`` times ``snr_factor``.
    """
    D = np.asarray(D, dtype=float)
    L, J = noise.shape
    denom = J * np.trace(noise.temporal) / L * float(np.sum(np.asarray(G) ** 2))
    v = float(np.sum(D ** 2)) / denom * snr_factor
    if not v > 0:
        raise ValueError("cannot derive a positive source variance from zero data")
    return v


def build_model(G, noise, parcels, spatial_covs, D=None, config=MemConfig()):
    """Base model holding alpha, v and the diffusion-kernel spatial factors.

    Active-state means start at zero and temporal factors at ``v * I``;
    :func:`invert` replaces them stage by stage.
    """
    L = noise.shape[0]
    v = config.v if config.v is not None else default_source_variance(D, G, noise, config.snr_factor)
    priors = [
        ParcelPrior(config.alpha, v, np.zeros((L, len(idx))), v * np.eye(L), Ss)
        for idx, Ss in zip(parcels, spatial_covs)
    ]
    return MemModel(G, noise, priors, parcels)


def gaussian_reference(model):
    """Stage-G model: every parcel white Gaussian with its own ``v_p``."""
    priors = [
        ParcelPrior.gaussian(model.L, len(idx), prior.v, prior.alpha)
        for idx, prior in zip(model.parcels, model.priors)
    ]
    return model.with_priors(priors)


def estimate_parameters(W_prelim, model, gamma=0.05):
    """Active-state parameters from a preliminary source estimate.

    For each parcel the mean is the parcel block of ``W_prelim`` and the
    temporal factor is the zero-mean empirical covariance of the block's
    columns (vertices as samples), shrunk by ``gamma`` and floored at
    ``1e-12 * mean diagonal`` (absolute 1e-12 for an all-zero block).
    ``alpha``, ``v`` and the spatial factor are carried over from ``model``.
    """
    W = np.asarray(W_prelim, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ValueError("preliminary estimate has non-finite entries")
    priors = []
    for idx, prior in zip(model.parcels, model.priors):
        block = W[:, idx]
        S = empirical_covariance(block)
        S = regularize_spd(S, gamma)
        scale = np.trace(S) / S.shape[0]
        floor = 1e-12 * scale if scale > 0 else 1e-12
        S = S + floor * np.eye(S.shape[0])
        priors.append(ParcelPrior(prior.alpha, prior.v, block.copy(), S, prior.sigma_s))
    return priors


def empirical_covariance(block):
    """Zero-mean second moment ``block @ block.T / n`` of the ``n`` columns of ``block``."""
    block = np.asarray(block, dtype=float)
    return block @ block.T / block.shape[1]


def _diagnostics(model, D, Lam, report=None):
    value, grad = free_energy_and_gradient(Lam, model, D)
    diag = {"free_energy": value, "grad_norm": float(np.linalg.norm(grad))}
    if report is None:
        diag.update(iterations=0, converged=True)
    else:
        diag.update(iterations=report.iterations, converged=report.converged,
                    message=report.message)
    return diag


def maximize_free_energy(model, D, lam0=None, opt=None):
    D = np.asarray(D, dtype=float)
    shape = (model.L, model.J)
    x0 = np.zeros(D.size) if lam0 is None else np.asarray(lam0, dtype=float).ravel()

    def fun(x):
        f, g = free_energy_and_gradient(x.reshape(shape), model, D)
        return f, g.ravel()

    x, report = maximize(fun, x0, opt or OptimizerConfig())
    return x.reshape(shape), report


def invert_stages(D, model, stage="uGM", opt=None, gamma=0.05,
                  selection=None, wavelet_cfg=None, n_times=None):
    """Run the G -> GM -> uGM pipeline up to ``stage``; returns ``{stage: SourceEstimate}``.

    Stage G uses the closed-form white-Gaussian solution.  Each later stage
    re-estimates the active-state means and temporal factors from the
    previous estimate and maximizes the free energy warm-started from the
    previous dual point.
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    D = np.asarray(D, dtype=float)
    out = {}
    ref = gaussian_reference(model)
    lam = solve_gaussian_reference(ref, D)
    est = reconstruct(lam, ref, selection, wavelet_cfg, n_times)
    est.diagnostics = _diagnostics(ref, D, lam)
    out["G"] = est
    for name in STAGES[1: STAGES.index(stage) + 1]:
        staged = model.with_priors(estimate_parameters(est.W_hat, model, gamma))
        start = free_energy(lam, staged, D)
        lam, report = maximize_free_energy(staged, D, lam, opt)
        est = reconstruct(lam, staged, selection, wavelet_cfg, n_times)
        est.diagnostics = _diagnostics(staged, D, lam, report)
        est.diagnostics["free_energy_start"] = start
        out[name] = est
    return out


def invert(D, model, stage="uGM", opt=None, **kwargs):
    return invert_stages(D, model, stage, opt, **kwargs)[stage]
