"""Synthetic trials, detection metrics (iota, kappa, ROC AUC) and Table-style reports."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import KroneckerCovariance, sample_matrix_normal
from .cortex import grow_patch


@dataclass(frozen=True)
class TimeProfile:
    samples: np.ndarray
    sfreq: float = 50.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if not np.all(np.isfinite(x)) or not np.any(x):
            raise ValueError("time profile must be finite with nonzero norm")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size


def slow_wave_profile(duration=4.0, sfreq=50.0, freq=1.0, onset=1.0, decay=0.6):
    """Slow-wave surrogate: a damped 1 Hz oscillation starting with a negative lobe."""
    t = np.arange(int(round(duration * sfreq))) / sfreq
    s = np.clip(t - onset, 0.0, None)
    x = -np.sin(2 * np.pi * freq * s) * np.exp(-s / decay)
    return TimeProfile(x / np.max(np.abs(x)), sfreq)


# --- forward model and noise --------------------------------------------------

def sphere_points(n, rng, radius=1.0):
    """``n`` points spread uniformly over a sphere."""
    x = rng.standard_normal((n, 3))
    return radius * x / np.linalg.norm(x, axis=1, keepdims=True)


def synthetic_leadfield(vertex_positions, n_sensors, rng, radius=1.3, width=0.8):
    """Smooth surrogate lead-field and the sensor positions used to build it.

    Each sensor sits at a random point of a sphere enclosing the mesh and
    sees every vertex with a Gaussian weight of its distance.
    """
    sensors = sphere_points(n_sensors, rng, radius)
    d2 = np.sum((sensors[:, None, :] - vertex_positions[None, :, :]) ** 2, axis=-1)
    G0 = np.exp(-d2 / (2 * width ** 2))
    return G0 / np.linalg.norm(G0), sensors


def ar1_covariance(n, phi=0.7):
    idx = np.arange(n)
    return phi ** np.abs(idx[:, None] - idx[None, :])


def distance_covariance(positions, length=0.5):
    d = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    return np.exp(-d / length)


class MatrixNormalNoise:
    """Noise source drawing matrix-normal ``T0 x J0`` realizations."""

    def __init__(self, cov):
        self.cov = cov

    def draw(self, rng):
        return sample_matrix_normal(np.zeros(self.cov.shape), self.cov, rng)


class RecordedNoise:
    """Noise source picking one of a fixed set of recordings at random."""

    def __init__(self, recordings):
        self.recordings = [np.asarray(r, dtype=float) for r in recordings]
        if not self.recordings:
            raise ValueError("no noise recordings")

    def draw(self, rng):
        return self.recordings[int(rng.integers(len(self.recordings)))].copy()


def default_noise(n_times, sensor_positions, phi=0.7, length=0.5):
    cov = KroneckerCovariance(ar1_covariance(n_times, phi),
                              distance_covariance(sensor_positions, length))
    return MatrixNormalNoise(cov)


def scale_noise_to_snr(signal, noise, snr_db):
    """Rescale ``noise`` so that ``20 log10(||signal|| / ||noise||) == snr_db``."""
    nn = np.linalg.norm(noise)
    if nn == 0:
        raise ValueError("cannot scale an all-zero noise realization")
    return noise * (np.linalg.norm(signal) / nn * 10.0 ** (-snr_db / 20.0))


@dataclass
class SimulatedTrial:
    Z: np.ndarray
    j0: np.ndarray
    patch: np.ndarray
    snr_db: float
    seed: int
    noise_scale: float = 0.0


def simulate_trial(g, G0, profile, patch_size, snr_db, noise, seed, patch=None,
                   center=None):
    """One synthetic trial: a connected patch firing ``profile`` plus scaled noise.

    ``snr_db = inf`` gives noiseless data.  Passing ``patch`` reuses a source
    configuration across noise realizations.  ``noise_scale`` records the
    factor applied to the raw noise draw (0 when no noise is added).
    """
    rng = np.random.default_rng(seed)
    G0 = np.asarray(G0, dtype=float)
    phi = profile.samples
    if G0.shape[1] != g.n_vertices:
        raise ValueError(f"lead-field has {G0.shape[1]} columns, mesh has {g.n_vertices} vertices")
    if patch is None:
        c = int(rng.integers(g.n_vertices)) if center is None else int(center)
        patch = grow_patch(g, c, patch_size, rng)
    patch = np.asarray(patch, dtype=int)
    j0 = np.zeros((phi.size, g.n_vertices))
    j0[:, patch] = phi[:, None]
    S = j0 @ G0.T
    if np.isinf(snr_db) and snr_db > 0:
        return SimulatedTrial(S, j0, patch, float(snr_db), int(seed), 0.0)
    raw = noise.draw(rng)
    if raw.shape != S.shape:
        raise ValueError(f"noise has shape {raw.shape}, expected {S.shape}")
    if not np.any(S):
        # no source: keep the raw noise scale
        return SimulatedTrial(raw, j0, patch, float(snr_db), int(seed), 1.0)
    scaled = scale_noise_to_snr(S, raw, snr_db)
    scale = np.linalg.norm(scaled) / np.linalg.norm(raw)
    return SimulatedTrial(S + scaled, j0, patch, float(snr_db), int(seed), float(scale))


# --- metrics --------------------------------------------------------------------

def iota_index(j0, j_rec):
    """Normalized Frobenius inner product of true and reconstructed sources."""
    j0 = np.asarray(j0, dtype=float)
    j_rec = np.asarray(j_rec, dtype=float)
    n0, n1 = np.linalg.norm(j0), np.linalg.norm(j_rec)
    if n0 == 0 or n1 == 0:
        raise ValueError("iota index is undefined for zero sources")
    return float(np.sum(j0 * j_rec) / (n0 * n1))


def kappa_scores(j_rec, profile, signed=False):
    """Per-vertex correlation of reconstructed time courses with ``profile``.

    Absolute values by default so the scores lie in [0, 1]; vertices with a
    zero time course score 0.
    """
    phi = profile.samples if isinstance(profile, TimeProfile) else np.asarray(profile, float)
    j_rec = np.asarray(j_rec, dtype=float)
    if j_rec.shape[0] != phi.size:
        raise ValueError(f"time courses have {j_rec.shape[0]} samples, profile {phi.size}")
    pn = np.linalg.norm(phi)
    if pn == 0:
        raise ValueError("profile has zero norm")
    norms = np.linalg.norm(j_rec, axis=0)
    dots = phi @ j_rec
    k = np.zeros(j_rec.shape[1])
    nz = norms > 0
    k[nz] = dots[nz] / (norms[nz] * pn)
    k = np.clip(k, -1.0, 1.0)
    return k if signed else np.abs(k)


def roc_auc(scores, labels):
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative labels")
    ranks = stats.rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def restricted_auc(scores, labels, rng, resamples=20):
    """Mean AUC over class-balanced subsamples of the negatives."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    pos = np.flatnonzero(labels)
    neg = np.flatnonzero(~labels)
    if neg.size < pos.size:
        raise ValueError("fewer negatives than positives")
    if neg.size == pos.size:
        return roc_auc(scores, labels)
    aucs = []
    for _ in range(resamples):
        sub = rng.choice(neg, size=pos.size, replace=False)
        idx = np.concatenate([pos, sub])
        aucs.append(roc_auc(scores[idx], labels[idx]))
    return float(np.mean(aucs))


@dataclass(frozen=True)
class MetricsRow:
    stage: str
    iota: float
    auc: float
    auc_restricted: float
    trial: int = 0
    realization: int = 0


def evaluate_estimate(j0, j_rec, patch, profile, stage, rng, resamples=20,
                      trial=0, realization=0):
    labels = np.zeros(j_rec.shape[1], dtype=bool)
    labels[patch] = True
    k = kappa_scores(j_rec, profile)
    return MetricsRow(stage, iota_index(j0, j_rec), roc_auc(k, labels),
                      restricted_auc(k, labels, rng, resamples), trial, realization)


METRICS = (("iota", "iota"), ("auc", "AUC"), ("auc_restricted", "AUC_R"))


def aggregate_report(rows, stages=("G", "GM", "uGM")):
    """Mean, median and sample standard deviation per stage and metric.

    Rows sharing ``(trial, stage)`` are first averaged over noise
    realizations.  The standard deviation uses ``n - 1`` and is 0 for a
    single trial.  Returns ``{metric: {statistic: {stage: value}}}``.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("no metric rows")
    grouped = defaultdict(list)
    for r in rows:
        grouped[(r.stage, r.trial)].append(r)
    per_stage = defaultdict(lambda: defaultdict(list))
    for (stage, _), rs in sorted(grouped.items()):
        for attr, _ in METRICS:
            per_stage[stage][attr].append(float(np.mean([getattr(r, attr) for r in rs])))
    present = [s for s in stages if s in per_stage]
    table = {}
    for attr, label in METRICS:
        table[label] = {"mean": {}, "median": {}, "std": {}}
        for s in present:
            vals = np.asarray(per_stage[s][attr])
            table[label]["mean"][s] = float(np.mean(vals))
            table[label]["median"][s] = float(np.median(vals))
            table[label]["std"][s] = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    return table


def report_csv(table):
    """Render :func:`aggregate_report` output as CSV (criteria x stages)."""
    stages = []
    for stat in table.values():
        for s in stat["mean"]:
            if s not in stages:
                stages.append(s)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["criterion", "statistic", *stages])
    for label, stat in table.items():
        for name in ("mean", "median", "std"):
            w.writerow([label, name, *(repr(stat[name][s]) for s in stages)])
    return buf.getvalue()


def write_metrics_csv(path_or_buf, rows):
    fields = ["trial", "realization", "stage", "iota", "auc", "auc_restricted"]
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([r.trial, r.realization, r.stage, repr(r.iota), repr(r.auc),
                        repr(r.auc_restricted)])
    finally:
        if own:
            fh.close()


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        return [
            MetricsRow(d["stage"], float(d["iota"]), float(d["auc"]),
                       float(d["auc_restricted"]), int(d["trial"]), int(d["realization"]))
            for d in csv.DictReader(fh)
        ]
