"""Glue between raw sensor trials and the reduced ``L x J`` inverse problem."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cortex, simstudy
from .core import KroneckerCovariance
from .covariance import flip_flop
from .mem import MemConfig, build_model, invert_stages
from .optimizer import OptimizerConfig
from .reduction import apply_filter, fit_spatial_pca, reduce_leadfield
from .wavelet import (
    WaveletConfig,
    boundary_mask,
    dwt_forward,
    extract_coefficients,
    select_coefficients,
)


@dataclass(frozen=True)
class Reduction:
    """Wavelet coefficient selection (time) followed by a PCA filter (space)."""

    wavelet: WaveletConfig
    selection: object
    spatial: object
    n_times: int

    @property
    def L(self):
        return len(self.selection)

    @property
    def J(self):
        return self.spatial.n_components

    def reduce(self, Z):
        """``n_times x J0`` sensor matrix -> ``L x J`` data matrix."""
        coeffs = dwt_forward(Z, self.wavelet)
        return apply_filter(extract_coefficients(coeffs, self.selection), self.spatial)

    def leadfield(self, G0):
        return reduce_leadfield(G0, self.spatial)


def fit_reduction(trials, L, J, taps=6, levels=None):
    """Select ``L`` wavelet coefficients and ``J`` principal axes from ``trials``.

    ``trials`` has shape ``(n_trials, n_times, J0)``.
    """
    trials = np.asarray(trials, dtype=float)
    n_times = trials.shape[1]
    cfg = WaveletConfig.for_length(n_times, taps=taps, levels=levels)
    coeffs = np.stack([dwt_forward(Z, cfg) for Z in trials])
    sel = select_coefficients(coeffs, boundary_mask(n_times, cfg), L)
    spatial = fit_spatial_pca(trials, J)
    return Reduction(cfg, sel, spatial, n_times)


def estimate_noise(recordings, reduction, tol=1e-8, max_iter=100, return_info=False):
    """Flip-flop Kronecker covariance of reduced, mean-removed noise recordings."""
    R = np.stack([reduction.reduce(N) for N in recordings])
    R = R - R.mean(axis=0)
    return flip_flop(R, tol=tol, max_iter=max_iter, return_info=return_info)


@dataclass
class DeskStudyConfig:
    subdivisions: int = 3
    n_sensors: int = 40
    n_parcels: int = 25
    J: int = 10
    L: int = 30
    taps: int = 6
    n_source_trials: int = 30
    n_realizations: int = 5
    n_noise_recordings: int = 60
    patch_min: int = 20
    patch_max: int = 80
    snr_db: float = 20 * np.log10(2.0)
    alpha: float = 0.25
    rho: float = 0.3
    gamma: float = 0.05
    snr_factor: float = 1.0
    noise_phi: float = 0.7
    noise_length: float = 0.5
    leadfield_width: float = 0.8
    resamples: int = 20
    seed: int = 0
    noiseless: bool = True
    grad_tol: float = 1e-8
    stages: tuple = ("G", "GM", "uGM")


@dataclass
class DeskStudyResult:
    rows: list
    alpha_checks: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)


@dataclass
class DeskSetup:
    graph: object
    G0: np.ndarray
    profile: object
    noise: object
    parcels: list
    spatial_covs: list
    sensors: np.ndarray


def make_setup(cfg, rng):
    verts, faces = cortex.icosphere(cfg.subdivisions)
    g = cortex.build_graph(verts, faces)
    G0, sensors = simstudy.synthetic_leadfield(verts, cfg.n_sensors, rng,
                                                width=cfg.leadfield_width)
    profile = simstudy.slow_wave_profile()
    noise = simstudy.default_noise(len(profile), sensors, cfg.noise_phi, cfg.noise_length)
    parcels = cortex.parcellate(g, cfg.n_parcels, rng)
    covs = [cortex.parcel_covariance(g, p, cfg.rho) for p in parcels]
    return DeskSetup(g, G0, profile, noise, parcels, covs, sensors)


def active_parcel(parcels, patch):
    overlap = [np.intersect1d(p, patch).size for p in parcels]
    return int(np.argmax(overlap)), np.asarray(overlap)


def run_desk_study(cfg=DeskStudyConfig(), progress=None):
    """End-to-end simulation study at desk scale.

    Returns metric rows for every (source trial, noise realization, stage),
    plus, when ``cfg.noiseless`` is set, one activity check per source trial
    on noiseless data: ``(trial, active parcel alpha, max silent alpha)``.
    """
    ss = np.random.SeedSequence(cfg.seed)
    setup_seq, trial_seq, noise_seq, eval_seq = ss.spawn(4)
    setup = make_setup(cfg, np.random.default_rng(setup_seq))
    g, G0, profile = setup.graph, setup.G0, setup.profile

    trial_seeds = trial_seq.generate_state(cfg.n_source_trials * (cfg.n_realizations + 1))
    trials = []
    patch_rng = np.random.default_rng(trial_seq.spawn(1)[0])
    for t in range(cfg.n_source_trials):
        size = int(patch_rng.integers(cfg.patch_min, cfg.patch_max + 1))
        center = int(patch_rng.integers(g.n_vertices))
        patch = cortex.grow_patch(g, center, size, patch_rng)
        for r in range(cfg.n_realizations):
            seed = int(trial_seeds[t * (cfg.n_realizations + 1) + r])
            trials.append((t, r, simstudy.simulate_trial(
                g, G0, profile, size, cfg.snr_db, setup.noise, seed, patch=patch)))

    noise_rng = np.random.default_rng(noise_seq)
    recordings = [setup.noise.draw(noise_rng) for _ in range(cfg.n_noise_recordings)]
    reduction = fit_reduction(np.stack([tr.Z for _, _, tr in trials]), cfg.L, cfg.J, cfg.taps)
    noise_cov = estimate_noise(recordings, reduction)
    G = reduction.leadfield(G0)
    mem_cfg = MemConfig(alpha=cfg.alpha, rho=cfg.rho, gamma=cfg.gamma, snr_factor=cfg.snr_factor)
    opt = OptimizerConfig(grad_tol=cfg.grad_tol)
    last = cfg.stages[-1]

    eval_rng = np.random.default_rng(eval_seq)
    result = DeskStudyResult(rows=[])
    for t, r, tr in trials:
        D = reduction.reduce(tr.Z)
        noise_t = noise_cov.scaled(tr.noise_scale ** 2)
        model = build_model(G, noise_t, setup.parcels, setup.spatial_covs, D, mem_cfg)
        ests = invert_stages(D, model, last, opt, cfg.gamma, reduction.selection,
                             reduction.wavelet, reduction.n_times)
        for stage in cfg.stages:
            est = ests[stage]
            result.rows.append(simstudy.evaluate_estimate(
                tr.j0, est.time_courses, tr.patch, profile, stage, eval_rng,
                cfg.resamples, t, r))
            result.diagnostics.append((t, r, stage, est.diagnostics))
        if progress:
            progress(t, r)

    if cfg.noiseless:
        for t in range(cfg.n_source_trials):
            tr0 = next(tr for tt, _, tr in trials if tt == t)
            seed = int(trial_seeds[t * (cfg.n_realizations + 1) + cfg.n_realizations])
            clean = simstudy.simulate_trial(g, G0, profile, tr0.patch.size, np.inf,
                                            setup.noise, seed, patch=tr0.patch)
            D = reduction.reduce(clean.Z)
            model = build_model(G, noise_cov.scaled(tr0.noise_scale ** 2), setup.parcels,
                                setup.spatial_covs, D, mem_cfg)
            est = invert_stages(D, model, "GM", opt, cfg.gamma)["GM"]
            act, overlap = active_parcel(setup.parcels, tr0.patch)
            silent = est.alpha_post[overlap == 0]
            result.alpha_checks.append(
                (t, float(est.alpha_post[act]), float(silent.max()) if silent.size else -np.inf))
    return result
